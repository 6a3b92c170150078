values = sorted(float(part) for part in input().split())
middle = values[1:4]
print(round(sum(middle) / 3, 2))

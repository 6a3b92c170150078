def repeat(values):
    return [value for value in values for _ in range(value)]

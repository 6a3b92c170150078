def counter(values):
    return values.count(0)

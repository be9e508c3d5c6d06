formula = "a + b"
out = eval(formula)  # risky shortcut

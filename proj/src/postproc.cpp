// placeholder, filled in per module

// caption attack (in progress)

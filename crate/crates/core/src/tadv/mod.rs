// texture attack (in progress)

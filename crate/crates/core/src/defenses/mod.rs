// defenses (in progress)

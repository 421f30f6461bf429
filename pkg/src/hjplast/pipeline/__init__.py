"""Dataset generation, path driving, the black-box baseline and the CLI."""

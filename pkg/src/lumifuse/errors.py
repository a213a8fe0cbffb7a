"""Exception types shared across the package."""


class InputError(Exception):
    """Invalid user input: malformed file, bad parameter, or broken invariant.

    The CLI maps this (and OS-level errors) to exit code 1; anything else
    is treated as an internal error (exit code 2).
    """

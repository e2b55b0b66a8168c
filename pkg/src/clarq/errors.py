class InfeasibleError(Exception):
    """No transmission schedule satisfies the slot minima within the available blocklength."""


class FblValidityWarning(UserWarning):
    """A slot is long enough that the finite-blocklength approximation no longer applies."""

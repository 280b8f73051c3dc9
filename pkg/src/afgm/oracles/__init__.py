"""Independent reference implementations used only by tests and acceptance runs.

Nothing in here imports the production modules; every function works on
plain numpy arrays (or python dicts of them), so agreement between an oracle
and the production path is evidence, not tautology.
"""

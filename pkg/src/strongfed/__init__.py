"""Federated sidechain consensus, two-way peg and confidential ledger simulator."""

__version__ = "0.1.0"

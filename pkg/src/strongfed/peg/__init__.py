"""Two-way peg: peg-in and peg-out transactions, watchmen and the audit."""

from strongfed.peg.audit import PegAudit, peg_audit
from strongfed.peg.ops import *  # noqa: F401,F403
from strongfed.peg.watchman import Watchman, make_watchmen

__all__ = [name for name in dir() if not name.startswith("_")]

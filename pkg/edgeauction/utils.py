"""
Miscellaneous utility functions: the project exceptions and money helpers
"""

import logging
from decimal import Decimal, ROUND_HALF_EVEN
from fractions import Fraction

from .constants import MONEY_SCALE

LOG = logging.getLogger(__name__)

MONEY_QUANTUM = Decimal(1) / Decimal(MONEY_SCALE)


# ----------------------------------------------------------------

def is_collection(v):
    """
    Decide if a variable contains multiple values and therefore can be
    iterated, discarding strings (single strings can also be iterated, but
    shouldn't qualify)
    """
    return hasattr(v, '__iter__') and not isinstance(v, str)


def split_list(value, sep=','):
    """
    Split a comma-separated value into its stripped, non-empty items
    """
    if value is None:
        return []
    if is_collection(value):
        return [str(v).strip() for v in value if str(v).strip()]
    return [v.strip() for v in str(value).split(sep) if v.strip()]


# ----------------------------------------------------------------------

def exact(value):
    """
    An exact Fraction for a decimal amount. Floats are taken by their
    shortest decimal repr, so 0.1 becomes 1/10 and not its binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def to_money(value):
    """
    Quantize an amount to the money grid (round-half-even) and return it as
    an exact Fraction in currency units.
      @param value (str,int,float,Decimal,Fraction): the amount
    """
    if isinstance(value, Fraction):
        value = Decimal(value.numerator) / Decimal(value.denominator)
    elif not isinstance(value, Decimal):
        value = Decimal(str(value))
    return Fraction(value.quantize(MONEY_QUANTUM, rounding=ROUND_HALF_EVEN))


def format_money(value):
    """
    Format an exact amount as a plain decimal string on the money grid.
    Locale-independent (always a period as decimal separator).
    """
    q = to_money(value)
    d = Decimal(q.numerator) / Decimal(q.denominator)
    return str(d.quantize(MONEY_QUANTUM, rounding=ROUND_HALF_EVEN))


def format_number(value):
    """
    Format a float for the output tables
    """
    return '{:.9g}'.format(float(value))


# ----------------------------------------------------------------------

class EdgeAuctionError(Exception):
    """
    The base exception for package errors.

    The message can be a Python format string, formatted with the remaining
    arguments.
    """
    def __init__(self, msg, *args):
        if len(args):
            try:
                msg = msg.format(*args)
            except (IndexError, KeyError, ValueError):
                pass
        elif isinstance(msg, Exception):
            msg = repr(msg)
        super(EdgeAuctionError, self).__init__(msg)
        LOG.warning('%s: %s', type(self).__name__, self)


class ScenarioError(EdgeAuctionError):
    """A scenario file cannot be read, parsed or assembled"""


class ModelError(EdgeAuctionError):
    """A query references an entity the topology does not have"""


class FeasibilityError(EdgeAuctionError):
    """A solution cannot be evaluated because it breaks a structural constraint"""


class SolverError(EdgeAuctionError):
    """A solver guard or limit rejects the instance"""


class BandwidthError(EdgeAuctionError):
    """Invalid input to the bandwidth allocation"""

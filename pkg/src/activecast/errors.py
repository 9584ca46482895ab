"""Exception types shared across the package."""


class ActivecastError(Exception):
    """Base class for all errors raised by this package."""


# --- ingestion ---

class MalformedCsv(ActivecastError):
    """Header or cell content violates the documented CSV contract."""


class GapInDates(ActivecastError):
    """Date columns are not daily-contiguous."""


class NegativeCumulative(ActivecastError):
    """A cumulative count cell is negative."""


class UnmappableHeader(ActivecastError):
    """A static-feature column has no canonical name (strict mode)."""


class EmptyIntersection(ActivecastError):
    """No country is present in every input table."""


class SeriesLengthMismatch(ActivecastError):
    """The three series tables do not share one date axis."""


# --- sample construction ---

class SeriesTooShort(ActivecastError):
    """No country has enough history for the requested horizon."""


class EmptyTrainingSet(ActivecastError):
    """A scaler was requested for an empty set of training rows."""


# --- numerics ---

class ZeroVariance(ActivecastError):
    """An operation that needs a non-constant input got a constant one."""


# --- models ---

class DegenerateTarget(ActivecastError):
    """Gradient training was asked to fit a constant target."""


class NonFiniteLoss(ActivecastError):
    """Training loss became NaN or infinite."""


class MaskMismatch(ActivecastError):
    """Prediction input does not match the model's feature mask."""


class AllCellsFailed(ActivecastError):
    """Every candidate in a search failed to produce a score."""


# --- harness ---

class MissingCells(ActivecastError):
    """A sweep result lacks cells required for the requested query."""


class UnknownCountry(ActivecastError):
    """The requested country is not in the panel."""


class InsufficientHistory(ActivecastError):
    """The requested country has no valid forecast window."""

"""Exception hierarchy shared by every module in the toolkit."""


class TargetSpanError(Exception):
    """Base class for all toolkit errors."""


class InputError(TargetSpanError, ValueError):
    """Caller supplied an argument that violates an operation's precondition."""


class SpanBoundsError(TargetSpanError, IndexError):
    """A span or character range falls outside its content."""


class SpanOverlapError(TargetSpanError, ValueError):
    """Two spans that must be disjoint share at least one token."""

    def __init__(self, first, second):
        self.first = first
        self.second = second
        super().__init__(f"overlapping spans {first} and {second}")


class ParseError(TargetSpanError, ValueError):
    """A line of an input file could not be decoded."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ValidationError(TargetSpanError, ValueError):
    """A well-formed record carries inconsistent content (bad offsets, overlaps)."""

    def __init__(self, message: str, record_id: str | None = None, path=None, line: int | None = None):
        self.message = message
        self.record_id = record_id
        self.path = path
        self.line = line
        context = []
        if path is not None:
            context.append(str(path) + (f":{line}" if line is not None else ""))
        if record_id is not None:
            context.append(f"record {record_id!r}")
        prefix = ", ".join(context)
        super().__init__(f"{prefix}: {message}" if prefix else message)

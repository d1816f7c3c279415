"""CHR-or engine with a generic tracer, trace rebuilder and trace queries."""

__version__ = "0.1.0"

from .syntax import parse_goal, parse_program, format_term  # noqa: E402
from .compiler import compile_program, lookup_occurrence  # noqa: E402
from .engine import Engine, Mode, run  # noqa: E402
from .tracer import parse_event, read_trace, serialize_event, write_trace  # noqa: E402
from .rebuild import check_faithfulness, reconstruct  # noqa: E402
from .query import eval_query, parse_query  # noqa: E402

__all__ = [
    "parse_program", "parse_goal", "format_term", "compile_program",
    "lookup_occurrence", "Engine", "Mode", "run", "parse_event", "read_trace",
    "serialize_event", "write_trace", "check_faithfulness", "reconstruct",
    "eval_query", "parse_query",
]

"""Restricted runtime for generated program predicates.

Scripts define one function named ``py_<concept>`` over the rewritten
column signature. They execute with a curated builtin set, the ``math``
module, and a whitelisted numpy facade (``np``) - no imports, no file or
network access, no clocks or randomness, so evaluation is deterministic.

A hard per-call timeout (SIGALRM) applies when running on the main
thread; worker threads fall back to unguarded calls since POSIX signals
cannot interrupt them.
"""

from __future__ import annotations

import builtins
import math
import signal
import threading
import types

import numpy as np

from .errors import SandboxBadReturn, SandboxError, SandboxTimeout

DEFAULT_TIMEOUT_S = 2.0

_SAFE_BUILTINS = {
    name: getattr(builtins, name)
    for name in (
        "abs", "all", "any", "bool", "dict", "divmod", "enumerate", "filter",
        "float", "frozenset", "int", "isinstance", "len", "list", "map", "max",
        "min", "pow", "range", "reversed", "round", "set", "sorted", "str",
        "sum", "tuple", "zip",
        "ValueError", "TypeError", "ZeroDivisionError", "Exception",
    )
}

_NUMPY_NAMES = (
    "abs", "all", "any", "arange", "argmax", "argmin", "array", "asarray",
    "clip", "concatenate", "cos", "dot", "exp", "float64", "histogram",
    "hypot", "linspace", "log", "max", "maximum", "mean", "median", "min",
    "minimum", "ndarray", "ones", "percentile", "pi", "prod", "sin", "sqrt",
    "stack", "std", "sum", "tanh", "uint8", "var", "where", "zeros",
)


def _numpy_facade():
    ns = types.SimpleNamespace(**{n: getattr(np, n) for n in _NUMPY_NAMES})
    ns.linalg = types.SimpleNamespace(norm=np.linalg.norm)
    return ns


class NoPixels:
    """Placeholder bound to ``img`` when pixel access is unavailable or
    disabled; any use raises inside the sandboxed call."""

    def __init__(self, reason: str):
        self._reason = reason

    def _blow(self):
        raise SandboxError(self._reason)

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        self._blow()

    def __getitem__(self, key):
        self._blow()

    def __iter__(self):
        self._blow()

    def __len__(self):
        self._blow()

    def __array__(self, *a, **k):
        self._blow()


class CompiledProgram:
    """A compiled script exposing its ``py_<name>`` entry point."""

    def __init__(self, source: str, entry_point: str):
        self.source = source
        self.entry_point = entry_point
        env = {"__builtins__": dict(_SAFE_BUILTINS), "math": math,
               "np": _numpy_facade()}
        try:
            code = compile(source, f"<udf {entry_point}>", "exec")
            exec(code, env)
        except SyntaxError as exc:
            raise SandboxError(f"script does not compile: {exc}") from exc
        except Exception as exc:
            raise SandboxError(f"script body raised at load: {exc!r}") from exc
        fn = env.get(entry_point)
        if not callable(fn):
            raise SandboxError(
                f"script must define a function named {entry_point!r}")
        self._fn = fn

    def call(self, kwargs: dict, timeout_s: float = DEFAULT_TIMEOUT_S) -> bool:
        """Invoke the entry point and coerce its result to bool.

        Raises SandboxTimeout on overrun, SandboxBadReturn for non-boolean
        results, SandboxError for any exception inside the script.
        """
        use_alarm = (timeout_s is not None
                     and threading.current_thread() is threading.main_thread())
        if use_alarm:
            def _on_alarm(signum, frame):
                raise SandboxTimeout(
                    f"{self.entry_point} exceeded {timeout_s}s")
            previous = signal.signal(signal.SIGALRM, _on_alarm)
            signal.setitimer(signal.ITIMER_REAL, timeout_s)
        try:
            result = self._fn(**kwargs)
        except (SandboxTimeout, SandboxBadReturn):
            raise
        except SandboxError:
            raise
        except Exception as exc:
            raise SandboxError(f"{self.entry_point} raised {exc!r}") from exc
        finally:
            if use_alarm:
                signal.setitimer(signal.ITIMER_REAL, 0)
                signal.signal(signal.SIGALRM, previous)
        if isinstance(result, (bool, np.bool_)):
            return bool(result)
        raise SandboxBadReturn(
            f"{self.entry_point} returned {type(result).__name__}, "
            f"expected bool")

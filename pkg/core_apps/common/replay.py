"""
Record/replay of discrete choices.

Sampling, grouping and matching pick indices that are piecewise constant in
their inputs. The finite-difference gradient check perturbs parameters by a
small step; if a perturbation flips an index choice the check compares two
different functions. Inside ``freeze_discrete_choices()`` the first call of
every ``@replayable`` function records its result and later calls replay the
recorded results in call order.
"""
import contextlib
import functools
from contextvars import ContextVar

_recorder = ContextVar("bica_discrete_choice_recorder", default=None)


class ChoiceRecorder:
    """Ordered store of recorded results, replayed by position."""

    def __init__(self):
        self.records = []
        self.replaying = False
        self.cursor = 0

    def rewind(self):
        self.replaying = True
        self.cursor = 0

    def next(self, name, compute):
        if not self.replaying:
            result = compute()
            self.records.append((name, result))
            return result
        recorded_name, result = self.records[self.cursor]
        if recorded_name != name:
            raise RuntimeError(
                f"Replay out of order: expected {recorded_name}, got {name}."
            )
        self.cursor += 1
        return result


@contextlib.contextmanager
def freeze_discrete_choices():
    """
    Freeze every ``@replayable`` choice made inside the block.

    Yields:
        ChoiceRecorder: call ``rewind()`` before each replayed forward pass.
    """
    recorder = ChoiceRecorder()
    token = _recorder.set(recorder)
    try:
        yield recorder
    finally:
        _recorder.reset(token)


def replayable(func):
    """Route calls through the active recorder, if any."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        recorder = _recorder.get()
        if recorder is None:
            return func(*args, **kwargs)
        return recorder.next(func.__qualname__, lambda: func(*args, **kwargs))

    return wrapper

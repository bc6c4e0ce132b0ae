import time
from contextlib import contextmanager

from utils.constants import STAGE_NAMES


class StageTimer:
    """Named wall-clock stage timings in milliseconds, accumulated per frame"""

    def __init__(self, names=STAGE_NAMES):
        self.names = list(names)
        self.elapsed = {name: 0.0 for name in self.names}

    @contextmanager
    def stage(self, name):
        if name not in self.elapsed:
            self.names.append(name)
            self.elapsed[name] = 0.0
        start = time.perf_counter()
        try:
            yield
        finally:
            self.elapsed[name] += 1000.0 * (time.perf_counter() - start)

    @property
    def total(self):
        return sum(self.elapsed.values())

    def as_dict(self):
        result = {name: self.elapsed[name] for name in self.names}
        result['total'] = self.total
        return result

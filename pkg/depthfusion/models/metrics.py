from dataclasses import dataclass, field


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    delta1: float
    delta2: float
    delta3: float
    count: int
    window: tuple = (0.0, float('inf'))

    def to_dict(self):
        return {
            'abs_rel': self.abs_rel,
            'delta1': self.delta1,
            'delta2': self.delta2,
            'delta3': self.delta3,
            'count': self.count,
            'window': list(self.window)
        }


@dataclass(frozen=True)
class TaeResult:
    """Temporal alignment error, reported x100"""
    tae: float
    pair_count: int
    pair_errors: list = field(default_factory=list)

    def to_dict(self):
        return {
            'tae': self.tae,
            'pair_count': self.pair_count,
            'pair_errors': list(self.pair_errors)
        }

"""Phase-space point of the drop: elevation, surface potential, capillarity."""

from dataclasses import dataclass
import math

from .errors import InvalidArgument
from .sphgrid import SphCoeffs

__all__ = ["SurfaceState"]


@dataclass(frozen=True)
class SurfaceState:
    """Elevation ``h`` and surface potential ``psi`` with capillarity ``sigma0``.

    Both coefficient vectors are brought to a common degree on construction.
    """

    h: SphCoeffs
    psi: SphCoeffs
    sigma0: float = 1.0

    def __post_init__(self):
        s = float(self.sigma0)
        if not (s > 0 and math.isfinite(s)):
            raise InvalidArgument(f"sigma0 must be positive and finite, got {self.sigma0}")
        L = max(self.h.lmax, self.psi.lmax)
        object.__setattr__(self, "sigma0", s)
        object.__setattr__(self, "h", self.h.resized(L))
        object.__setattr__(self, "psi", self.psi.resized(L))

    @property
    def lmax(self):
        return self.h.lmax

    @classmethod
    def rest(cls, lmax, sigma0=1.0):
        return cls(SphCoeffs(lmax), SphCoeffs(lmax), sigma0)

    def replace(self, h=None, psi=None):
        return SurfaceState(self.h if h is None else h, self.psi if psi is None else psi,
                            self.sigma0)

    def to_dict(self):
        return {"sigma0": self.sigma0, "h": self.h.to_dict(), "psi": self.psi.to_dict()}

    @classmethod
    def from_dict(cls, obj):
        try:
            h = SphCoeffs.from_dict(obj["h"])
            psi = SphCoeffs.from_dict(obj["psi"])
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"state object needs 'h' and 'psi' entries: {exc}") from None
        return cls(h, psi, float(obj.get("sigma0", 1.0)))

"""Spin waves in a forced magnetic film.

Solves ``i u_t = D lap(u) + omega u + i (lam + sponge + C(x, y, t) - b |u|^2) u``
on a periodic grid by Strang splitting:

* pointwise half step: ``u_t = (a - b|u|^2) u - i omega u`` with ``a`` frozen at
  the substep midpoint, advanced in closed form (logistic law for ``|u|^2``,
  exact phase rotation);
* linear full step in Fourier space: ``u_hat *= exp(i D |k|^2 dt)``.

An absorbing sponge (extra negative damping near the edges) stands in for an
unbounded film.  Point contacts are disks; sources are driven with
``+-gain * p(t)``, detectors are passive probes.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numba
import numpy as np
import scipy.fft as sfft

from .encoding import Carrier
from .errors import InstabilityError, LayoutOverflowError, StepSizeError, UnpairableEventsError
from .readout import analysis_window, burst_events, correlate, phase_lock_offset

FILM_CARRIER = Carrier(frequency=0.005)
FILM_GAIN = 0.5
FILM_DT = 0.04
FILM_SIZE = 80.0
FILM_POINTS = 256
CONTACT_RADIUS = 3.0
SPONGE_WIDTH = 8.0
SPONGE_DEPTH = 0.5
FILM_PERIODS = 6


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STNO_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class FilmParams:
    D: complex = 1 + 0.01j
    omega: float = 0.15
    lam: float = -0.1
    b: float = 0.1
    floor: float = 0.0

    def __post_init__(self):
        D = complex(self.D)
        object.__setattr__(self, "D", D)
        if not D.real > 0:
            raise ValueError(f"Re(D) must be positive, got {D}")
        if D.imag < 0:
            raise ValueError(f"Im(D) must be non-negative, got {D}")
        if self.b < 0:
            raise ValueError(f"b must be non-negative, got {self.b}")
        if self.floor < 0:
            raise ValueError(f"floor must be non-negative, got {self.floor}")


FILM_PARAMS = FilmParams(floor=1e-5)


class Polarity(enum.Enum):
    POSITIVE = 1
    NEGATIVE = -1
    DETECTOR = 0


@dataclass(frozen=True)
class Contact:
    id: int
    center: tuple[float, float]
    radius: float
    polarity: Polarity

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"contact radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not isinstance(self.polarity, Polarity):
            object.__setattr__(self, "polarity", Polarity[str(self.polarity).upper()])

    def to_dict(self) -> dict:
        return {"id": self.id, "center": list(self.center), "radius": self.radius,
                "polarity": self.polarity.name.lower()}

    @classmethod
    def from_dict(cls, data: dict) -> "Contact":
        return cls(int(data["id"]), tuple(data["center"]), float(data["radius"]),
                   Polarity[str(data["polarity"]).upper()])


def contact_indicator(c: Contact, x, y):
    """1 on the closed disk of the contact, 0 elsewhere."""
    inside = (np.asarray(x) - c.center[0]) ** 2 + (np.asarray(y) - c.center[1]) ** 2 <= c.radius ** 2
    return inside.astype(int) if np.ndim(inside) else int(inside)


def film_forcing(contacts: Sequence[Contact], carrier: Carrier, gain: float, t: float, x, y,
                 detector_bias: float = 0.0):
    p = carrier(t)
    total = 0.0
    for c in contacts:
        if c.polarity is Polarity.DETECTOR:
            total = total + detector_bias * contact_indicator(c, x, y)
        else:
            total = total + gain * p * c.polarity.value * contact_indicator(c, x, y)
    return total


def dispersion_frequency(params: FilmParams, k) -> complex:
    """Complex frequency of the plane wave ``exp(i(k.x - Omega t))`` of the linear film."""
    k = np.asarray(k, dtype=float)
    k2 = float(np.dot(k, k)) if k.ndim else float(k) ** 2
    return params.omega - params.D * k2


def sponge_profile(nx: int, ny: int, lx: float, ly: float, width: float, depth: float = SPONGE_DEPTH):
    """Non-positive damping that ramps quadratically to ``-depth`` at the grid edges."""
    if width <= 0 or depth == 0:
        return np.zeros((nx, ny))

    def ramp(n, length):
        x = np.arange(n) * (length / n)
        d = np.minimum(x, length - x)
        return np.where(d < width, -depth * ((width - d) / width) ** 2, 0.0)

    return np.minimum(ramp(nx, lx)[:, None], ramp(ny, ly)[None, :])


@dataclass
class FilmGrid:
    nx: int
    ny: int
    lx: float
    ly: float
    u: np.ndarray
    t: float = 0.0
    sponge: np.ndarray | None = None
    sponge_width: float = 0.0

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 2 or n & (n - 1):
                raise ValueError(f"grid sizes must be powers of two, got {n}")
        if not math.isclose(self.lx / self.nx, self.ly / self.ny, rel_tol=1e-12):
            raise ValueError("cells must be square: lx/nx == ly/ny")
        self.u = np.asarray(self.u, dtype=complex)
        if self.u.shape != (self.nx, self.ny):
            raise ValueError(f"field shape {self.u.shape} does not match grid {(self.nx, self.ny)}")
        if self.sponge is None:
            self.sponge = np.zeros((self.nx, self.ny))
        if np.any(self.sponge > 0):
            raise ValueError("sponge profile must be non-positive")

    @classmethod
    def make(cls, nx: int = FILM_POINTS, ny: int | None = None, lx: float = FILM_SIZE, ly: float | None = None,
             u0: complex = 0.01, sponge_width: float = SPONGE_WIDTH, sponge_depth: float = SPONGE_DEPTH):
        ny = nx if ny is None else ny
        ly = lx * ny / nx if ly is None else ly
        sponge = sponge_profile(nx, ny, lx, ly, sponge_width, sponge_depth)
        return cls(nx, ny, lx, ly, np.full((nx, ny), u0, dtype=complex), 0.0, sponge, sponge_width)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    def coordinates(self):
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * (self.ly / self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def wavenumbers(self):
        kx = 2 * np.pi * np.fft.fftfreq(self.nx, self.dx)
        ky = 2 * np.pi * np.fft.fftfreq(self.ny, self.ly / self.ny)
        return np.meshgrid(kx, ky, indexing="ij")

    def norm(self) -> float:
        """Discrete L2 norm ``sqrt(sum |u|^2 dx dy)``."""
        return float(np.sqrt(np.sum(np.abs(self.u) ** 2) * self.dx * (self.ly / self.ny)))

    def with_field(self, u, t=None) -> "FilmGrid":
        return replace(self, u=np.array(u, dtype=complex), t=self.t if t is None else t)

    def check_contacts(self, contacts: Sequence[Contact]):
        w = self.sponge_width
        for c in contacts:
            cx, cy = c.center
            if (cx - c.radius < w or cx + c.radius > self.lx - w
                    or cy - c.radius < w or cy + c.radius > self.ly - w):
                raise LayoutOverflowError(f"contact {c.id} at {c.center} intrudes into the boundary layer")
        for i, a in enumerate(contacts):
            for b in contacts[i + 1:]:
                if math.dist(a.center, b.center) <= a.radius + b.radius:
                    raise LayoutOverflowError(f"contacts {a.id} and {b.id} overlap")


def fig3_layout(lx: float = FILM_SIZE, ly: float | None = None, radius: float = CONTACT_RADIUS,
                sponge_width: float = SPONGE_WIDTH, source_gap: float = 12.0, source_offset: float = 20.0,
                detector_offset: tuple[float, float] = (18.0, 12.0)) -> list[Contact]:
    """Four source pairs and detector pairs around the film centre.

    Sources 1,2 sit below the centre (driven by ``p``) and 3,4 above it
    (driven by ``-p``).  Detectors 5,6 are on the right and 7,8 on the left,
    with 5 and 8 level with the lower sources and 6 and 7 with the upper ones.
    Offsets are absolute distances from the centre, so a film that is too
    small pushes contacts into the sponge.
    """
    ly = lx if ly is None else ly
    cx, cy = lx / 2, ly / 2
    h = source_gap / 2
    dx_, dy_ = detector_offset
    P, N, Dt = Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.DETECTOR
    spec = [
        (1, cx - h, cy - source_offset, P), (2, cx + h, cy - source_offset, P),
        (3, cx - h, cy + source_offset, N), (4, cx + h, cy + source_offset, N),
        (5, cx + dx_, cy - dy_, Dt), (6, cx + dx_, cy + dy_, Dt),
        (7, cx - dx_, cy + dy_, Dt), (8, cx - dx_, cy - dy_, Dt),
    ]
    contacts = [Contact(i, (x, y), radius, pol) for i, x, y, pol in spec]
    for c in contacts:
        x, y = c.center
        if x - radius < sponge_width or x + radius > lx - sponge_width \
                or y - radius < sponge_width or y + radius > ly - sponge_width:
            raise LayoutOverflowError(f"contact {c.id} does not fit a {lx:g} x {ly:g} film "
                                      f"with a {sponge_width:g}-wide boundary layer")
    return contacts


NEAREST_SOURCE = {5: 2, 8: 1, 6: 4, 7: 3}


def ray_probes(contacts: Sequence[Contact], source_id: int, toward_id: int, distances: Iterable[float],
               radius: float = 1.0, first_id: int = 100) -> list[Contact]:
    """Passive probes on the ray from one contact through another, at the given distances."""
    by_id = {c.id: c for c in contacts}
    src = np.array(by_id[source_id].center)
    direction = np.array(by_id[toward_id].center) - src
    direction /= np.linalg.norm(direction)
    return [Contact(first_id + k, tuple(src + d * direction), radius, Polarity.DETECTOR)
            for k, d in enumerate(distances)]


def write_layout(path, contacts: Iterable[Contact]):
    with open(path, "w") as fh:
        json.dump({"contacts": [c.to_dict() for c in contacts]}, fh, indent=2)


def read_layout(path) -> list[Contact]:
    with open(path) as fh:
        data = json.load(fh)
    return [Contact.from_dict(c) for c in data["contacts"]]


@numba.njit(cache=True)
def _growth(a, h):
    """Factors (e, g) of the logistic update ``s -> s e / (1 + b s g)``."""
    x = 2.0 * a * h
    if abs(x) > 1e-8:
        phi = math.expm1(x) / x
    else:
        phi = 1.0 + 0.5 * x
    return math.exp(x), 2.0 * h * phi


@numba.njit(cache=True)
def _pointwise(u, grow, gfac, base, weight, drive, b, floor, h, rotation):
    """Closed-form pointwise half step in place; returns (max|u| before, after).

    ``grow``/``gfac`` hold the precomputed factors for cells with no contact
    drive; cells with ``weight != 0`` recompute them for the current drive.
    """
    nx, ny = u.shape
    half_floor = 0.5 * floor * h
    before = 0.0
    after = 0.0
    for i in range(nx):
        for j in range(ny):
            z = u[i, j]
            s = z.real * z.real + z.imag * z.imag
            if s == 0.0:
                continue
            r0 = math.sqrt(s)
            if r0 > before:
                before = r0
            r = r0 + half_floor
            s = r * r
            w = weight[i, j]
            if w != 0.0:
                e, g = _growth(base[i, j] + drive * w, h)
            else:
                e, g = grow[i, j], gfac[i, j]
            r = math.sqrt(s * e / (1.0 + b * s * g)) + half_floor
            if r > after:
                after = r
            u[i, j] = z * (r / r0) * rotation
    return before, after


class FilmSolver:
    """Pre-assembled stepper for one film, parameter set and contact layout."""

    def __init__(self, grid: FilmGrid, params: FilmParams, contacts: Sequence[Contact], carrier: Carrier,
                 gain: float, dt: float, detector_bias: float = 0.0, check: bool = True):
        dt_max = 0.5 * grid.dx ** 2 / abs(params.D)
        if not 0 < dt <= dt_max * (1 + 1e-12):
            raise StepSizeError(f"dt={dt} outside (0, {dt_max:.4g}] for dx={grid.dx:.4g}")
        if not 0.0 <= detector_bias <= 0.09:
            raise ValueError("detector bias must lie in [0, 0.09]")
        if check:
            grid.check_contacts(contacts)
        self.params = params
        self.contacts = list(contacts)
        self.carrier = carrier
        self.gain = gain
        self.dt = dt
        X, Y = grid.coordinates()
        weight = np.zeros((grid.nx, grid.ny))
        base = params.lam + grid.sponge.copy()
        self.masks = {}
        for c in self.contacts:
            chi = contact_indicator(c, X, Y).astype(bool)
            if not chi.any():
                raise LayoutOverflowError(f"contact {c.id} covers no grid cell")
            self.masks[c.id] = np.flatnonzero(chi)
            if c.polarity is Polarity.DETECTOR:
                base = base + detector_bias * chi
            else:
                weight += c.polarity.value * chi
        self.base = base
        self.weight = weight
        self.grow = np.exp(2.0 * base * 0.5 * dt)
        x = base * dt
        self.gfac = dt * np.where(np.abs(x) > 1e-8, np.expm1(x) / np.where(x == 0, 1.0, x), 1.0 + 0.5 * x)
        KX, KY = grid.wavenumbers()
        self.linear = np.exp(1j * params.D * (KX ** 2 + KY ** 2) * dt)
        self.rotation = complex(np.exp(-1j * params.omega * 0.5 * dt))
        self.workers = _threads()

    def _half(self, u, t_mid):
        drive = self.gain * self.carrier(t_mid)
        return _pointwise(u, self.grow, self.gfac, self.base, self.weight, drive, self.params.b,
                          self.params.floor, 0.5 * self.dt, self.rotation)

    def advance(self, u: np.ndarray, t: float) -> np.ndarray:
        """One Strang step from time ``t``; works on a copy of ``u``."""
        u = np.array(u, dtype=complex, copy=True)
        peak, _ = self._half(u, t + 0.25 * self.dt)
        u = sfft.fft2(u, workers=self.workers, overwrite_x=True)
        u *= self.linear
        u = sfft.ifft2(u, workers=self.workers, overwrite_x=True)
        _, new_peak = self._half(u, t + 0.75 * self.dt)
        if not np.isfinite(new_peak) or (peak > 0 and new_peak > 10 * peak):
            raise InstabilityError(f"max|u| jumped from {peak:.3g} to {new_peak:.3g} at t={t:g}")
        return u

    def probe(self, u: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1)
        return np.array([flat[self.masks[c.id]].mean() for c in self.contacts])


def step_film(grid: FilmGrid, params: FilmParams, contacts: Sequence[Contact], carrier: Carrier, gain: float,
              dt: float, detector_bias: float = 0.0) -> FilmGrid:
    solver = FilmSolver(grid, params, contacts, carrier, gain, dt, detector_bias, check=False)
    return grid.with_field(solver.advance(grid.u, grid.t), grid.t + dt)


@dataclass
class ProbeSeries:
    contact_id: int
    t: np.ndarray
    u: np.ndarray

    @property
    def abs_u(self) -> np.ndarray:
        return np.abs(self.u)


@dataclass
class FilmRun:
    probes: dict[int, ProbeSeries]
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    final: FilmGrid | None = None
    contacts: list[Contact] = field(default_factory=list)
    carrier: Carrier | None = None


def simulate_film(grid0: FilmGrid, params: FilmParams, contacts: Sequence[Contact], carrier: Carrier,
                  gain: float, t_end: float, dt: float, probe_stride: int = 5,
                  snapshot_stride: int | None = None, detector_bias: float = 0.0) -> FilmRun:
    solver = FilmSolver(grid0, params, contacts, carrier, gain, dt, detector_bias)
    n_steps = int(math.ceil((t_end - grid0.t) / dt - 1e-9))
    u = grid0.u.copy()
    times = [grid0.t]
    samples = [solver.probe(u)]
    snapshots = [(grid0.t, u.copy())] if snapshot_stride else []
    t = grid0.t
    for step in range(1, n_steps + 1):
        u = solver.advance(u, t)
        t = grid0.t + step * dt
        if step % probe_stride == 0:
            times.append(t)
            samples.append(solver.probe(u))
        if snapshot_stride and step % snapshot_stride == 0:
            snapshots.append((t, u.copy()))
    times = np.array(times)
    samples = np.array(samples)
    probes = {c.id: ProbeSeries(c.id, times, samples[:, k]) for k, c in enumerate(contacts)}
    return FilmRun(probes, snapshots, grid0.with_field(u, t), list(contacts), carrier)


def decode_detectors(probes, carrier: Carrier, ids: Iterable[int] | None = None,
                     window: tuple[float, float] | None = None) -> dict[int, int | None]:
    """Correlation digit per contact; ``None`` where the correlation is indeterminate.

    The threshold is 5% of the largest correlation the probe's own burst
    height could produce, since passive detectors see attenuated waves.
    """
    if isinstance(probes, FilmRun):
        probes = probes.probes
    if not isinstance(probes, dict):
        probes = {p.contact_id: p for p in probes}
    ids = sorted(probes) if ids is None else list(ids)
    digits = {}
    for cid in ids:
        p = probes[cid]
        win = analysis_window(p.t) if window is None else window
        sel = (p.t >= win[0]) & (p.t <= win[1])
        peak = float(p.abs_u[sel].max()) if sel.any() else 0.0
        threshold = 0.05 * 0.5 * carrier.amplitude * peak
        res = correlate(p.abs_u, p.t, carrier, win, threshold=threshold if peak > 0 else 1.0)
        digits[cid] = res.digit
    return digits


@dataclass(frozen=True)
class LockReport:
    detector: int
    source: int
    digit: int | None
    phase_offset: float
    delay: float
    distance: float


def nearest_sources(contacts: Sequence[Contact]) -> dict[int, int]:
    """Map each detector id to the id of the closest driven contact."""
    sources = [c for c in contacts if c.polarity is not Polarity.DETECTOR]
    if not sources:
        return {}
    return {c.id: min(sources, key=lambda s: (math.dist(s.center, c.center), s.id)).id
            for c in contacts if c.polarity is Polarity.DETECTOR}


def lock_reports(run: FilmRun, pairs: dict[int, int] | None = None,
                 threshold_fraction: float = 0.5) -> list[LockReport]:
    """Phase offset and burst delay of each detector relative to its paired source.

    Pairs default to each detector's nearest source.  When the burst trains
    cannot be paired the offset and delay are NaN.
    """
    pairs = nearest_sources(run.contacts) if pairs is None else pairs
    carrier = run.carrier
    by_id = {c.id: c for c in run.contacts}
    digits = decode_detectors(run, carrier, ids=sorted(pairs))
    reports = []
    for det, src in sorted(pairs.items()):
        pd, ps = run.probes[det], run.probes[src]
        lo, hi = analysis_window(pd.t)
        sel = (pd.t >= lo) & (pd.t <= hi)
        ev_s = burst_events(ps.abs_u[sel], ps.t[sel], carrier, threshold_fraction)
        ev_d = burst_events(pd.abs_u[sel], pd.t[sel], carrier, threshold_fraction)
        try:
            dphi, delay = phase_lock_offset(ev_s, ev_d)
        except UnpairableEventsError:
            dphi, delay = math.nan, math.nan
        dist = math.dist(by_id[det].center, by_id[src].center)
        reports.append(LockReport(det, src, digits[det], dphi, delay, dist))
    return reports


def write_probe_csv(path, probe: ProbeSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_u", "im_u", "abs_u"])
        for t, z in zip(probe.t, probe.u):
            w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z)))])


def write_snapshot_csv(path, u: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "re_u", "im_u"])
        for (i, j), z in np.ndenumerate(u):
            w.writerow([i, j, repr(float(z.real)), repr(float(z.imag))])


def write_pgm(path, u: np.ndarray):
    """8-bit greyscale map of |u| scaled to its maximum."""
    mag = np.abs(u)
    top = mag.max()
    img = np.zeros_like(mag, dtype=np.uint8) if top == 0 else np.round(255 * mag / top).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.T[::-1].tobytes())

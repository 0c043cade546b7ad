"""Runtime velocity governor: distance-aware and force-aware speed caps.

Two independent constraints cap the platform speed:

* a collaborative-zone radius S(v) = v*T_q + (3/2) v^2 / a + C — the distance
  inside which a human could be reached before the platform can react
  (latency travel + braking distance + reach margin), and its inversion
  giving the largest speed whose zone radius fits the measured distance;
* a contact-force cap: the largest speed whose predicted average impact
  force m v (1 + e(v)) / dt stays at or below the configured limit,
  found by bisection on the fitted airframe profile.

The streaming runtime fuses both caps, saturates commands, applies a
staleness failsafe, and logs one compliance record per emitted command.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NonMonotoneForceMapWarning
from .fit import BODY_REGION_LIMITS_N, AirframeProfile

CAP_EPSILON = 1e-9

#: relative slack when deciding a command already satisfies the cap; keeps
#: saturation exactly idempotent without ever exceeding cap + 1e-9
_NORM_SLACK = 1e-12

_BISECT_WIDTH = 1e-7


@dataclass
class GovernorConfig:
    """Operating parameters of the safety layer.

    ``t_q_s`` is the end-to-end perception+response latency, ``a_mps2`` the
    worst-case deceleration, ``c_m`` the human-reach margin added to the
    stopping envelope, ``f_star_n`` the average-force limit (pick from
    BODY_REGION_LIMITS_N, or set ``f_star_is_peak`` to state a peak-force
    target instead). ``stale_cap_mps`` optionally tightens the staleness
    failsafe below the force-safe speed (down to 0 for strict facilities).
    """

    t_q_s: float = 0.1
    a_mps2: float = 15.0
    c_m: float = 1.2
    v_cruise_mps: float = 8.0
    f_star_n: float = 140.0
    v_platform_max_mps: float = 20.0
    staleness_timeout_s: float = 0.25
    mode: str = "binary"
    stale_cap_mps: float | None = None
    f_star_is_peak: bool = False

    def __post_init__(self) -> None:
        for name in (
            "t_q_s",
            "a_mps2",
            "c_m",
            "v_cruise_mps",
            "f_star_n",
            "v_platform_max_mps",
            "staleness_timeout_s",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.mode not in ("binary", "ramp"):
            raise ValueError(f"mode must be 'binary' or 'ramp', got {self.mode!r}")
        limit = max(BODY_REGION_LIMITS_N.values())
        if self.f_star_n > limit:
            raise ValueError(
                f"f_star_n {self.f_star_n:g} N exceeds the largest body-region "
                f"limit {limit:g} N"
            )
        if self.stale_cap_mps is not None and self.stale_cap_mps < 0:
            raise ValueError("stale_cap_mps must be >= 0 when set")

    def to_dict(self) -> dict:
        return {
            "t_q_s": self.t_q_s,
            "a_mps2": self.a_mps2,
            "c_m": self.c_m,
            "v_cruise_mps": self.v_cruise_mps,
            "f_star_n": self.f_star_n,
            "v_platform_max_mps": self.v_platform_max_mps,
            "staleness_timeout_s": self.staleness_timeout_s,
            "mode": self.mode,
            "stale_cap_mps": self.stale_cap_mps,
            "f_star_is_peak": self.f_star_is_peak,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GovernorConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


@dataclass
class VelocityCommand:
    vx: float
    vy: float
    vz: float
    timestamp: float

    def speed(self) -> float:
        return math.sqrt(self.vx**2 + self.vy**2 + self.vz**2)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in (self.vx, self.vy, self.vz))


@dataclass
class GovernorState:
    last_distance_m: float = math.nan
    last_distance_time_s: float = math.nan
    active_cap_mps: float = math.nan
    cap_source: str = "none"
    s_current_m: float = math.nan


@dataclass
class ComplianceRecord:
    timestamp: float
    input_speed_mps: float
    output_speed_mps: float
    d_m: float
    s_m: float
    cap_mps: float
    cap_source: str
    violated: bool
    flags: list[str] = field(default_factory=list)


def iso_radius(v: float, cfg: GovernorConfig) -> float:
    """Collaborative-zone radius at speed v: v*T_q + 1.5 v^2/a + C."""
    if v < 0:
        raise ValueError(f"speed must be >= 0, got {v}")
    return v * cfg.t_q_s + 1.5 * v * v / cfg.a_mps2 + cfg.c_m


def iso_speed_cap(d: float, cfg: GovernorConfig) -> float:
    """Largest speed whose zone radius fits inside distance d.

    The positive root of (3/2) v^2/a + T_q v + (C - d) = 0 for d > C, zero at
    or inside the reach margin, saturated at the platform maximum. Total on
    d >= 0 and non-decreasing in d.
    """
    if d <= cfg.c_m:
        return 0.0
    k = 1.5 / cfg.a_mps2
    disc = cfg.t_q_s**2 + 4.0 * k * (d - cfg.c_m)
    root = (-cfg.t_q_s + math.sqrt(disc)) / (2.0 * k)
    return min(root, cfg.v_platform_max_mps)


def avg_impact_force(v: float, profile: AirframeProfile) -> float:
    """Predicted average contact force at approach speed v: m v (1 + e(v)) / dt."""
    if v < 0:
        raise ValueError(f"speed must be >= 0, got {v}")
    return profile.mass_kg * v * (1.0 + profile.e_hat_at(v)) / profile.dt_s


def _avg_force_on_grid(grid: np.ndarray, profile: AirframeProfile) -> np.ndarray:
    lo, hi = profile.restitution.domain
    clamped = np.clip(grid, lo, hi)
    ec_r = np.clip(npoly.polyval(clamped, profile.restitution.coefficients), 0.0, None)
    return profile.mass_kg * grid * (1.0 + np.sqrt(ec_r)) / profile.dt_s


def force_speed_cap(f_star: float, profile: AirframeProfile, cfg: GovernorConfig) -> float:
    """Largest speed whose predicted average impact force stays <= f_star.

    Bisection on [0, v_platform_max]: the force map is continuous with
    F(0) = 0, so a sign bracket always exists when the limit binds; fitted
    restitution under a square root can have flat spots that break
    Newton-style solvers. Returns the lower bracket end, so the returned
    speed never predicts more than f_star. Non-binding limits return the
    platform maximum. A non-monotone force map on a 1000-point grid raises
    NonMonotoneForceMapWarning (the bracket result is still valid).
    """
    if f_star <= 0:
        raise ValueError(f"f_star must be positive, got {f_star}")
    vmax = cfg.v_platform_max_mps

    grid = np.linspace(0.0, vmax, 1000)
    fvals = _avg_force_on_grid(grid, profile)
    if np.any(np.diff(fvals) < -1e-9):
        warnings.warn(
            f"average-force map for profile {profile.name!r} decreases somewhere "
            f"on [0, {vmax:g}] m/s",
            NonMonotoneForceMapWarning,
            stacklevel=2,
        )

    if avg_impact_force(vmax, profile) < f_star:
        return vmax
    lo, hi = 0.0, vmax
    while hi - lo > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if avg_impact_force(mid, profile) > f_star:
            hi = mid
        else:
            lo = mid
    return lo


def fuse_caps(d: float, cfg: GovernorConfig, profile: AirframeProfile) -> tuple[float, str]:
    """Combine the distance cap and the force cap for a fresh distance d.

    Binary mode: inside the cruise-speed zone radius the cap drops to the
    force-safe speed, outside it is the platform maximum. Ramp mode: the cap
    follows the zone-radius inversion, never above the platform maximum and
    never below the force-safe speed (which alone guarantees force compliance
    if contact does happen). The source labels which constraint bound.
    """
    v_force = force_speed_cap(cfg.f_star_n, profile, cfg)
    return _fuse_with_vforce(d, cfg, v_force)


def _fuse_with_vforce(d: float, cfg: GovernorConfig, v_force: float) -> tuple[float, str]:
    vmax = cfg.v_platform_max_mps
    if cfg.mode == "binary":
        if d < iso_radius(cfg.v_cruise_mps, cfg):
            return v_force, "force"
        return vmax, "none"
    v_iso = min(iso_speed_cap(d, cfg), vmax)
    if v_iso <= v_force:
        return v_force, "force"
    if v_iso < vmax:
        return v_iso, "iso"
    return vmax, "none"


def limit_command(cmd: VelocityCommand, cap: float) -> VelocityCommand:
    """Direction-preserving saturation of a velocity command.

    Non-finite commands collapse to zero (the caller flags the record).
    Commands at or under the cap pass through unchanged, which makes the
    operation exactly idempotent.
    """
    if cap < 0:
        raise ValueError(f"cap must be >= 0, got {cap}")
    if not cmd.is_finite():
        return VelocityCommand(0.0, 0.0, 0.0, cmd.timestamp)
    n = cmd.speed()
    if n <= cap * (1.0 + _NORM_SLACK):
        return cmd
    s = cap / n
    return VelocityCommand(cmd.vx * s, cmd.vy * s, cmd.vz * s, cmd.timestamp)


class GovernorRuntime:
    """Stateful streaming governor.

    Telemetry intake (range, odometry) and command limiting may run on
    different threads: intake publishes one immutable snapshot (distance,
    time, cap, source) per range update, and the limiter only reads the
    latest snapshot — it never blocks on intake. Cap math happens on the
    intake side.

    In ramp mode the zone engagement carries 5% hysteresis (engage when the
    distance drops below S(v_cruise), release only above 1.05x that radius)
    so that hovering at the boundary cannot chatter the cap on and off.
    """

    def __init__(self, cfg: GovernorConfig, profile: AirframeProfile):
        self.cfg = cfg
        self.profile = profile
        eff = cfg
        if cfg.f_star_is_peak:
            eff = replace(
                cfg,
                f_star_n=cfg.f_star_n / profile.peak_to_average_ratio(),
                f_star_is_peak=False,
            )
        self._eff_cfg = eff
        self.f_star_effective_n = eff.f_star_n
        self.v_force = force_speed_cap(eff.f_star_n, profile, eff)
        stale = self.v_force if cfg.stale_cap_mps is None else min(cfg.stale_cap_mps, self.v_force)
        self.stale_cap = stale
        self.s_zone = iso_radius(cfg.v_cruise_mps, cfg)
        self._s_release = 1.05 * self.s_zone
        self._engaged = False
        self._snapshot: tuple[float, float, float, str] | None = None
        self._current_speed: float | None = None
        self._last_emitted_t: float | None = None
        self.records: list[ComplianceRecord] = []
        self.state = GovernorState()

    # -- telemetry intake ---------------------------------------------------

    def on_range(self, d: float, t: float) -> None:
        """Ingest a nearest-person distance measurement taken at time t."""
        if self._eff_cfg.mode == "ramp":
            if not self._engaged and d < self.s_zone:
                self._engaged = True
            elif self._engaged and d > self._s_release:
                self._engaged = False
            if self._engaged:
                cap, source = _fuse_with_vforce(d, self._eff_cfg, self.v_force)
            else:
                cap, source = self._eff_cfg.v_platform_max_mps, "none"
        else:
            cap, source = _fuse_with_vforce(d, self._eff_cfg, self.v_force)
        self._snapshot = (d, t, cap, source)  # single atomic publish
        self.state.last_distance_m = d
        self.state.last_distance_time_s = t
        self.state.active_cap_mps = cap
        self.state.cap_source = source

    def on_odom(self, vx: float, vy: float, vz: float, t: float) -> None:
        """Ingest platform odometry; keeps the live zone radius for logging."""
        self._current_speed = math.sqrt(vx**2 + vy**2 + vz**2)
        self.state.s_current_m = iso_radius(self._current_speed, self.cfg)

    # -- command limiting ---------------------------------------------------

    def on_command(self, cmd: VelocityCommand) -> VelocityCommand:
        """Limit one velocity command against the freshest cap and log it."""
        flags: list[str] = []
        if self._last_emitted_t is not None and cmd.timestamp < self._last_emitted_t:
            flags.append("clock-skew")

        snap = self._snapshot
        if snap is None or cmd.timestamp - snap[1] > self._eff_cfg.staleness_timeout_s:
            d = snap[0] if snap is not None else math.nan
            cap, source = self.stale_cap, "stale-failsafe"
        else:
            d, _, cap, source = snap

        finite = cmd.is_finite()
        if not finite:
            flags.append("non-finite-command")
        out = limit_command(cmd, cap)
        in_speed = cmd.speed() if finite else math.nan
        out_speed = out.speed()

        s_m = self.state.s_current_m
        if math.isnan(s_m):
            s_m = self.s_zone
        record = ComplianceRecord(
            timestamp=cmd.timestamp,
            input_speed_mps=in_speed,
            output_speed_mps=out_speed,
            d_m=d,
            s_m=s_m,
            cap_mps=cap,
            cap_source=source,
            violated=out_speed > cap + CAP_EPSILON,
            flags=flags,
        )
        self.records.append(record)
        self._last_emitted_t = cmd.timestamp
        self.state.active_cap_mps = cap
        self.state.cap_source = source
        return out

    @property
    def last_record(self) -> ComplianceRecord | None:
        return self.records[-1] if self.records else None

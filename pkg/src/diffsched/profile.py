"""Offline latency model.

Every duration the scheduler or the simulator needs comes from a
:class:`LatencyProfile`. Video denoising steps are tabled at a few
sequence-parallel (SP) anchor degrees; degrees in between are filled by a
saturating speedup curve ``speedup(p) = p / (1 + gamma * (p - 1))`` whose
``gamma`` is fitted so the curve passes through the next anchor above ``p``.
Image batches larger than the tabled sizes use a linear batching-efficiency
model ``e2e(b) = e2e(1) * (alpha + (1 - alpha) * b)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from .errors import ParseError, SchemaError, UnknownConfiguration


class Kind(str, Enum):
    IMAGE = "image"
    VIDEO = "video"


class ResolutionClass(str, Enum):
    R256 = "R256"
    R480 = "R480"
    R720 = "R720"
    R1024 = "R1024"
    R1440 = "R1440"

    @property
    def height(self) -> int:
        return int(self.value[1:])

    @property
    def dims(self) -> Tuple[int, int]:
        """(width, height) in pixels; video classes are 16:9, image classes square."""
        if self in VIDEO_RESOLUTIONS:
            return _VIDEO_WIDTH[self], self.height
        return self.height, self.height

    @classmethod
    def parse(cls, value) -> "ResolutionClass":
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        if text.endswith("p"):
            text = "R" + text[:-1]
        if not text.startswith("R"):
            text = "R" + text
        try:
            return cls(text)
        except ValueError:
            raise UnknownConfiguration(f"unknown resolution class {value!r}") from None


VIDEO_RESOLUTIONS = (ResolutionClass.R256, ResolutionClass.R480, ResolutionClass.R720)
IMAGE_RESOLUTIONS = (ResolutionClass.R720, ResolutionClass.R1024, ResolutionClass.R1440)
_VIDEO_WIDTH = {ResolutionClass.R256: 448, ResolutionClass.R480: 848, ResolutionClass.R720: 1280}


def legal_resolutions(kind: Kind) -> Tuple[ResolutionClass, ...]:
    return VIDEO_RESOLUTIONS if Kind(kind) is Kind.VIDEO else IMAGE_RESOLUTIONS


REQUIRED_KEYS = (
    "video_step_ms",
    "image_e2e_ms",
    "vae_decode_ms",
    "text_encode_ms",
    "overheads",
    "steps",
    "sp_degrees",
)

DEFAULT_PROFILE_PATH = "default_profile.json"


@dataclass(frozen=True)
class LatencyProfile:
    """Profiled stage latencies. Treat as immutable once built."""

    # (res, frames) -> {sp anchor degree: per-step DiT ms}
    video_step_table: Dict[Tuple[ResolutionClass, int], Dict[int, float]]
    # (res, batch) -> end-to-end ms
    image_e2e_table: Dict[Tuple[ResolutionClass, int], float]
    vae_decode_table: Dict[Tuple[ResolutionClass, int], float]
    text_encode: float
    pause_overhead_us: Dict[int, float]
    resume_overhead_ms: Dict[int, float]
    sp_reconfig_overhead: float = 0.0
    video_steps_total: int = 50
    image_steps_total: int = 28
    valid_sp_degrees: Tuple[int, ...] = (1, 2, 4, 8)
    image_batch_alpha: Dict[ResolutionClass, float] = field(default_factory=dict)
    sp_ref: Dict[ResolutionClass, int] = field(default_factory=dict)
    max_image_batch: int = 8
    paused_state_mb: Dict[ResolutionClass, float] = field(default_factory=dict)
    interpolate: bool = True

    def __post_init__(self):
        degrees = tuple(sorted(int(p) for p in self.valid_sp_degrees))
        object.__setattr__(self, "valid_sp_degrees", degrees)
        self._validate()
        cache = {}
        for (res, frames), anchors in self.video_step_table.items():
            for p in degrees:
                try:
                    cache[(res, frames, p)] = self._step_from_anchors(anchors, p)
                except UnknownConfiguration:
                    pass
        object.__setattr__(self, "_step_cache", cache)

    def _validate(self):
        bad = []
        for key, anchors in self.video_step_table.items():
            for p, ms in anchors.items():
                if p not in self.valid_sp_degrees:
                    bad.append(f"video_step_ms{list(key)}: sp {p} not in sp_degrees")
                if not ms > 0:
                    bad.append(f"video_step_ms{list(key)}[{p}] must be positive")
            ordered = [anchors[p] for p in sorted(anchors)]
            if any(b > a for a, b in zip(ordered, ordered[1:])):
                bad.append(f"video_step_ms{list(key)} increases with sp degree")
        for table_name, table in (("image_e2e_ms", self.image_e2e_table), ("vae_decode_ms", self.vae_decode_table)):
            for key, ms in table.items():
                if not ms > 0:
                    bad.append(f"{table_name}{list(key)} must be positive")
        if not self.text_encode > 0:
            bad.append("text_encode_ms must be positive")
        for res in {r for r, _ in self.image_e2e_table}:
            sizes = sorted(b for r, b in self.image_e2e_table if r == res)
            vals = [self.image_e2e_table[(res, b)] for b in sizes]
            if any(b < a for a, b in zip(vals, vals[1:])):
                bad.append(f"image_e2e_ms[{res.value}] decreases with batch size")
        for name, table in (("pause_us", self.pause_overhead_us), ("resume_ms", self.resume_overhead_ms)):
            for p, v in table.items():
                if p not in self.valid_sp_degrees:
                    bad.append(f"overheads.{name}: sp {p} not in sp_degrees")
                if not v > 0:
                    bad.append(f"overheads.{name}[{p}] must be positive")
        if self.sp_reconfig_overhead < 0:
            bad.append("overheads.sp_reconfig_ms must be >= 0")
        if self.video_steps_total < 1 or self.image_steps_total < 1:
            bad.append("steps must be >= 1")
        if bad:
            raise ParseError("; ".join(bad))

    # -- lookups ---------------------------------------------------------

    def _step_from_anchors(self, anchors: Mapping[int, float], p: int) -> float:
        if p in anchors:
            return float(anchors[p])
        if not self.interpolate:
            raise UnknownConfiguration(f"sp degree {p} not anchored and interpolation disabled")
        if 1 not in anchors:
            raise UnknownConfiguration("interpolation needs an sp=1 anchor")
        upper = [q for q in anchors if q > p]
        if not upper:
            raise UnknownConfiguration(f"sp degree {p} above every anchored degree")
        pu = min(upper)
        t1 = float(anchors[1])
        gamma = sp_gamma(pu, t1 / anchors[pu])
        value = t1 * (1.0 + gamma * (p - 1)) / p
        lower = [q for q in anchors if q < p]
        hi = float(anchors[max(lower)])
        lo = float(anchors[pu])
        return min(max(value, lo), hi)

    def video_step_ms(self, res: ResolutionClass, frames: int, sp: int) -> float:
        try:
            return self._step_cache[(res, frames, sp)]
        except KeyError:
            pass
        res = ResolutionClass.parse(res)
        anchors = self.video_step_table.get((res, int(frames)))
        if anchors is None:
            raise UnknownConfiguration(f"no video profile for {res.value}/{frames}f")
        if sp not in self.valid_sp_degrees:
            raise UnknownConfiguration(f"sp degree {sp} not in {self.valid_sp_degrees}")
        return self._step_from_anchors(anchors, sp)

    def image_ms(self, res: ResolutionClass, batch: int) -> float:
        if batch < 1:
            raise ValueError("batch must be >= 1")
        hit = self.image_e2e_table.get((res, batch))
        if hit is not None:
            return hit
        res = ResolutionClass.parse(res)
        base = self.image_e2e_table.get((res, 1))
        if base is None:
            raise UnknownConfiguration(f"no image profile for {res.value}")
        if (res, batch) in self.image_e2e_table:
            return self.image_e2e_table[(res, batch)]
        alpha = self.image_batch_alpha.get(res)
        if alpha is None:
            raise UnknownConfiguration(f"no batch size {batch} or alpha for {res.value}")
        return base * (alpha + (1.0 - alpha) * batch)

    def vae_ms(self, res: ResolutionClass, frames: int) -> float:
        try:
            return self.vae_decode_table[(res, frames)]
        except KeyError:
            raise UnknownConfiguration(f"no VAE profile for {ResolutionClass.parse(res).value}/{frames}f") from None

    def pause_ms(self, sp: int) -> float:
        return self.pause_overhead_us[sp] / 1000.0

    def resume_ms(self, sp: int) -> float:
        return self.resume_overhead_ms[sp]

    def reference_sp(self, res: ResolutionClass) -> int:
        p = self.sp_ref.get(res, 1)
        return p if p in self.valid_sp_degrees else self.valid_sp_degrees[0]

    # -- (de)serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        def nest(table):
            out: Dict[str, Dict[str, float]] = {}
            for (res, sub), v in sorted(table.items(), key=lambda kv: (kv[0][0].height, kv[0][1])):
                out.setdefault(res.value, {})[str(sub)] = v
            return out

        steps: Dict[str, Dict[str, Dict[str, float]]] = {}
        for (res, frames), anchors in sorted(self.video_step_table.items(), key=lambda kv: (kv[0][0].height, kv[0][1])):
            steps.setdefault(res.value, {})[str(frames)] = {str(p): anchors[p] for p in sorted(anchors)}
        by_res = lambda m: {r.value: m[r] for r in sorted(m, key=lambda r: r.height)}  # noqa: E731
        return {
            "video_step_ms": steps,
            "image_e2e_ms": nest(self.image_e2e_table),
            "image_batch_alpha": by_res(self.image_batch_alpha),
            "vae_decode_ms": nest(self.vae_decode_table),
            "text_encode_ms": self.text_encode,
            "overheads": {
                "pause_us": {str(p): self.pause_overhead_us[p] for p in sorted(self.pause_overhead_us)},
                "resume_ms": {str(p): self.resume_overhead_ms[p] for p in sorted(self.resume_overhead_ms)},
                "sp_reconfig_ms": self.sp_reconfig_overhead,
            },
            "steps": {"video": self.video_steps_total, "image": self.image_steps_total},
            "sp_degrees": list(self.valid_sp_degrees),
            "sp_ref": by_res(self.sp_ref),
            "max_image_batch": self.max_image_batch,
            "paused_state_mb": by_res(self.paused_state_mb),
            "interpolate": self.interpolate,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "LatencyProfile":
        if not isinstance(doc, Mapping):
            raise ParseError("profile must be a JSON object")
        missing = [k for k in REQUIRED_KEYS if k not in doc]
        if missing:
            raise SchemaError(missing)

        def number(v, where):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"expected a number, got {v!r}", field=where)
            return float(v)

        def integer(v, where):
            try:
                return int(v)
            except (TypeError, ValueError):
                raise ParseError(f"expected an integer, got {v!r}", field=where) from None

        def res_of(v, where):
            try:
                return ResolutionClass.parse(v)
            except UnknownConfiguration:
                raise ParseError(f"unknown resolution {v!r}", field=where) from None

        def mapping(v, where):
            if not isinstance(v, Mapping):
                raise ParseError("expected an object", field=where)
            return v

        steps = {}
        for r, by_frames in mapping(doc["video_step_ms"], "video_step_ms").items():
            res = res_of(r, f"video_step_ms.{r}")
            for f, by_sp in mapping(by_frames, f"video_step_ms.{r}").items():
                where = f"video_step_ms.{r}.{f}"
                steps[(res, integer(f, where))] = {
                    integer(p, where): number(v, f"{where}.{p}") for p in mapping(by_sp, where) for v in [by_sp[p]]
                }
        if not steps:
            raise SchemaError(["video_step_ms entries"])

        def table2(key):
            out = {}
            for r, sub in mapping(doc[key], key).items():
                res = res_of(r, f"{key}.{r}")
                for k, v in mapping(sub, f"{key}.{r}").items():
                    out[(res, integer(k, f"{key}.{r}"))] = number(v, f"{key}.{r}.{k}")
            return out

        image = table2("image_e2e_ms")
        vae = table2("vae_decode_ms")
        overheads = mapping(doc["overheads"], "overheads")
        miss = [f"overheads.{k}" for k in ("pause_us", "resume_ms") if k not in overheads]
        if miss:
            raise SchemaError(miss)
        step_counts = mapping(doc["steps"], "steps")
        miss = [f"steps.{k}" for k in ("video", "image") if k not in step_counts]
        if miss:
            raise SchemaError(miss)
        sp_list = doc["sp_degrees"]
        if not isinstance(sp_list, list) or not sp_list:
            raise ParseError("expected a non-empty list", field="sp_degrees")

        def per_res(key, conv):
            return {
                res_of(r, f"{key}.{r}"): conv(v, f"{key}.{r}")
                for r, v in mapping(doc.get(key, {}), key).items()
            }

        return cls(
            video_step_table=steps,
            image_e2e_table=image,
            vae_decode_table=vae,
            text_encode=number(doc["text_encode_ms"], "text_encode_ms"),
            pause_overhead_us={
                integer(p, "overheads.pause_us"): number(v, f"overheads.pause_us.{p}")
                for p, v in mapping(overheads["pause_us"], "overheads.pause_us").items()
            },
            resume_overhead_ms={
                integer(p, "overheads.resume_ms"): number(v, f"overheads.resume_ms.{p}")
                for p, v in mapping(overheads["resume_ms"], "overheads.resume_ms").items()
            },
            sp_reconfig_overhead=number(overheads.get("sp_reconfig_ms", 0.0), "overheads.sp_reconfig_ms"),
            video_steps_total=integer(step_counts["video"], "steps.video"),
            image_steps_total=integer(step_counts["image"], "steps.image"),
            valid_sp_degrees=tuple(integer(p, "sp_degrees") for p in sp_list),
            image_batch_alpha=per_res("image_batch_alpha", number),
            sp_ref=per_res("sp_ref", integer),
            max_image_batch=integer(doc.get("max_image_batch", 8), "max_image_batch"),
            paused_state_mb=per_res("paused_state_mb", number),
            interpolate=bool(doc.get("interpolate", True)),
        )


def sp_gamma(p: int, speedup: float) -> float:
    """Communication coefficient so that ``p / (1 + gamma*(p-1)) == speedup``."""
    if p == 1:
        return 0.0
    return (p / speedup - 1.0) / (p - 1)


def sp_speedup(p: int, gamma: float) -> float:
    return p / (1.0 + gamma * (p - 1))


# -- operations ---------------------------------------------------------------


def video_step_latency(profile: LatencyProfile, res, frames: int, sp: int) -> float:
    return profile.video_step_ms(res, frames, sp)


def image_batch_latency(profile: LatencyProfile, res, batch: int) -> float:
    return profile.image_ms(res, batch)


def video_remaining_time(profile: LatencyProfile, res, frames: int, sp: int,
                         steps_remaining: int, include_vae: bool = False) -> float:
    if steps_remaining < 0:
        raise ValueError("steps_remaining must be >= 0")
    total = steps_remaining * profile.video_step_ms(res, frames, sp) if steps_remaining else 0.0
    if include_vae:
        total += profile.vae_ms(res, frames)
    return total


def offline_e2e_latency(profile: LatencyProfile, kind, res, frames: int = 1) -> float:
    """Deadline reference latency: one image alone, or one video at its reference SP degree."""
    res = ResolutionClass.parse(res)
    if Kind(kind) is Kind.IMAGE:
        return profile.image_ms(res, 1)
    sp = profile.reference_sp(res)
    return (profile.text_encode
            + profile.video_steps_total * profile.video_step_ms(res, frames, sp)
            + profile.vae_ms(res, frames))


def load_profile(path=None) -> LatencyProfile:
    """Load a profile JSON document; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("diffsched.data").joinpath(DEFAULT_PROFILE_PATH).read_text()
        where = DEFAULT_PROFILE_PATH
    else:
        text = Path(path).read_text()
        where = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{where}: {exc.msg}", line=exc.lineno) from None
    return LatencyProfile.from_dict(doc)


def save_profile(profile: LatencyProfile, path) -> None:
    Path(path).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")


_default: Optional[LatencyProfile] = None


def default_profile() -> LatencyProfile:
    global _default
    if _default is None:
        _default = load_profile()
    return _default

"""Synthetic photo-collection generator with exact ground truth.

Objects are planar constellations of descriptor prototypes. A view is a
homography from an object surface into a camera frame plus a noise model
(descriptor jitter, feature dropout, clutter features) and a tag emission.
Because every view is generated from known homographies, the ground truth
can answer relevance, correspondence, and overlap questions exactly, which
is what the test oracles lean on.

Archetypes:

* ``flat-small``   one plane, every view frames the whole plane
* ``flat-large``   like flat-small but big, may own ``facade-detail`` children
* ``facade-detail`` occupies a sub-rectangle of its parent's plane; detail
  views frame just that rectangle
* ``panorama``     a wide plane viewed through a sliding window
* ``solid-3d``     a ring of faces; each view sees a primary face and the
  next face around the ring, so opposite views share nothing
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import (Dataset, ImageRecord, LocalFeature, RelevanceAnnotation)
from .errors import FormatError, MissingArtifactError, ValidationError
from .geometry import _dlt, normalize_homography

ARCHETYPES = ("flat-small", "flat-large", "solid-3d", "facade-detail", "panorama")

ARCHETYPE_CATEGORY = {
    "flat-small": "Paintings",
    "flat-large": "Landmark Buildings",
    "solid-3d": "Sculptures",
    "facade-detail": "Building Details",
    "panorama": "Panoramas",
}

ARCHETYPE_NAME_WORD = {
    "flat-small": "painting",
    "flat-large": "palace",
    "solid-3d": "statue",
    "facade-detail": "portal",
    "panorama": "vista",
}

GENERIC_TAG_POOL = ["vacation", "photo", "canon", "europe", "paris", "france",
                    "travel", "holiday", "trip", "2008"]


# ---------------------------------------------------------------------------
# configuration

@dataclass
class FrameConfig:
    width: int = 640
    height: int = 480


@dataclass
class NoiseConfig:
    descriptor_sigma: float = 0.0
    dropout: float = 0.0
    distractors: int = 0


@dataclass
class TagProfile:
    correct: float = 0.85        # chance a view carries the object's true name
    misspell: float = 0.08       # chance of a spelling-perturbed name
    generic: float = 1.0         # expected count of generic noise tags (Poisson)
    parent_name: float = 0.6     # detail views: chance the "correct" tag is the parent's name
    title: float = 0.25          # chance the title carries the name


@dataclass
class PowerLawConfig:
    alpha: float = 2.0
    min_views: int = 3
    max_views: int = 40


@dataclass
class DetailConfig:
    count: int = 1
    features: int = 25
    views: int = 6
    queries: int = 0
    rect_w: float = 0.3          # fraction of the parent plane's width
    rect_h: float = 0.3
    tags: TagProfile | None = None


@dataclass
class ObjectGroupConfig:
    archetype: str
    count: int = 1
    views: int = 8
    features: int = 60
    queries: int = 0
    query_duplicates: int = 0
    plane_w: float | None = None
    plane_h: float | None = None
    faces: int = 4
    face_weights: list[float] | None = None
    window_frac: float = 0.45    # panorama sliding-window width fraction
    category: str | None = None
    name_word: str | None = None
    tags: TagProfile | None = None
    details: DetailConfig | None = None
    views_power_law: PowerLawConfig | None = None

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValidationError(
                f"unknown archetype {self.archetype!r}; expected one of {ARCHETYPES}")
        if self.archetype == "facade-detail":
            raise ValidationError(
                "facade-detail objects are declared via the 'details' block of "
                "a flat-large group, not as their own group")
        if self.details is not None and self.archetype != "flat-large":
            raise ValidationError("only flat-large groups can carry details")


@dataclass
class GeneratorConfig:
    descriptor_dim: int = 128
    prototype_margin: float = 0.5
    num_owners: int = 10
    spam_owner: bool = False
    view_jitter: float = 0.06    # perspective jitter of frame corners, fraction
    frame: FrameConfig = field(default_factory=FrameConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    tags: TagProfile = field(default_factory=TagProfile)
    groups: list[ObjectGroupConfig] = field(default_factory=list)


_PLANE_DEFAULTS = {
    "flat-small": (400.0, 300.0),
    "flat-large": (800.0, 600.0),
    "panorama": (1600.0, 400.0),
    "solid-3d": (300.0, 400.0),   # per face
}


# ---------------------------------------------------------------------------
# scene model

@dataclass
class Surface:
    surface_id: str
    width: float
    height: float
    positions: np.ndarray        # (n, 2) in surface coordinates
    prototypes: np.ndarray       # (n, D)


@dataclass
class SceneObject:
    object_id: str
    archetype: str
    true_name: str
    category: str
    parent_id: str | None = None
    plane: tuple[float, float] | None = None
    detail_rect: tuple[float, float, float, float] | None = None
    n_faces: int = 0
    surface_ids: list[str] = field(default_factory=list)


@dataclass
class ViewSpec:
    image_id: str
    object_id: str
    owner_id: str
    surfaces: list[tuple[str, np.ndarray]]   # (surface_id, surface->frame homography)
    sigma: float
    dropout: float
    distractors: int
    tags: list[str]
    title: str
    noise_seed: int
    is_query: bool = False
    duplicate_of: str | None = None


@dataclass
class Scene:
    surfaces: dict[str, Surface]
    objects: dict[str, SceneObject]
    views: list[ViewSpec]


# ---------------------------------------------------------------------------
# ground truth

@dataclass
class GtImage:
    image_id: str
    object_id: str
    category: str
    surfaces: list[tuple[str, np.ndarray]]
    is_query: bool = False
    duplicate_of: str | None = None


class GroundTruth:
    def __init__(self, objects: dict[str, SceneObject], images: dict[str, GtImage],
                 seed: int = 0):
        self.objects = objects
        self.images = images
        self.seed = seed

    # -- relationships ------------------------------------------------------
    def primary_object(self, image_id: str) -> str:
        return self.images[image_id].object_id

    def parent_of(self, object_id: str) -> str | None:
        return self.objects[object_id].parent_id

    def relevance(self, query_id: str, object_id: str) -> str:
        """good: same object; ok: whole<->detail; bad: everything else
        (sibling details of one facade rate bad)."""
        if object_id not in self.objects:
            raise ValidationError(f"unknown object {object_id!r}")
        q_obj = self.primary_object(query_id)
        if q_obj == object_id:
            return "good"
        if self.parent_of(q_obj) == object_id or self.parent_of(object_id) == q_obj:
            return "ok"
        return "bad"

    def good_names(self, object_id: str) -> set[str]:
        """Names counted as fully correct for views of this object. A detail
        inherits its parent facade's name (tagging a detail with the building
        name is right, not merely related)."""
        obj = self.objects[object_id]
        names = {obj.true_name}
        if obj.parent_id is not None:
            names.add(self.objects[obj.parent_id].true_name)
        return names

    def ok_names(self, object_id: str) -> set[str]:
        names = set()
        for other in self.objects.values():
            if other.object_id == object_id:
                continue
            if other.parent_id == object_id or self.objects[object_id].parent_id == other.object_id:
                names.add(other.true_name)
        return names - self.good_names(object_id)

    def true_relative_homography(self, image_a: str, image_b: str) -> np.ndarray | None:
        """Exact frame-a -> frame-b homography through the first shared surface,
        or None when the two views share no surface."""
        surf_a = dict(self.images[image_a].surfaces)
        for surface_id, h_b in self.images[image_b].surfaces:
            if surface_id in surf_a:
                h_a = surf_a[surface_id]
                return normalize_homography(h_b @ np.linalg.inv(h_a))
        return None

    # -- evaluation support --------------------------------------------------
    def query_ids(self) -> list[str]:
        return [i for i, img in self.images.items() if img.is_query]

    def annotation_rows(self) -> list[RelevanceAnnotation]:
        rows = []
        for query_id in self.query_ids():
            for object_id in sorted(self.objects):
                rows.append(RelevanceAnnotation(
                    query_id=query_id, object_id=object_id,
                    rating=self.relevance(query_id, object_id)))
        return rows

    # -- persistence ---------------------------------------------------------
    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "ground_truth", "seed": self.seed},
                                sort_keys=True) + "\n")
            for object_id in sorted(self.objects):
                obj = self.objects[object_id]
                fh.write(json.dumps({
                    "kind": "object",
                    "object_id": obj.object_id,
                    "archetype": obj.archetype,
                    "true_name": obj.true_name,
                    "category": obj.category,
                    "parent_id": obj.parent_id,
                    "plane": list(obj.plane) if obj.plane else None,
                    "detail_rect": list(obj.detail_rect) if obj.detail_rect else None,
                    "n_faces": obj.n_faces,
                    "surface_ids": obj.surface_ids,
                }, sort_keys=True) + "\n")
            for image_id in sorted(self.images):
                img = self.images[image_id]
                fh.write(json.dumps({
                    "kind": "image",
                    "image_id": img.image_id,
                    "object_id": img.object_id,
                    "category": img.category,
                    "is_query": img.is_query,
                    "duplicate_of": img.duplicate_of,
                    "surfaces": [[sid, [float(v) for v in h.ravel()]]
                                 for sid, h in img.surfaces],
                }, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(
                f"no ground truth at {path}; run the generate stage first",
                stage="generate")
        objects: dict[str, SceneObject] = {}
        images: dict[str, GtImage] = {}
        seed = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                kind = obj.get("kind")
                if kind == "ground_truth":
                    seed = obj.get("seed", 0)
                elif kind == "object":
                    objects[obj["object_id"]] = SceneObject(
                        object_id=obj["object_id"],
                        archetype=obj["archetype"],
                        true_name=obj["true_name"],
                        category=obj["category"],
                        parent_id=obj["parent_id"],
                        plane=tuple(obj["plane"]) if obj["plane"] else None,
                        detail_rect=tuple(obj["detail_rect"]) if obj["detail_rect"] else None,
                        n_faces=obj["n_faces"],
                        surface_ids=list(obj["surface_ids"]),
                    )
                elif kind == "image":
                    images[obj["image_id"]] = GtImage(
                        image_id=obj["image_id"],
                        object_id=obj["object_id"],
                        category=obj["category"],
                        is_query=obj["is_query"],
                        duplicate_of=obj["duplicate_of"],
                        surfaces=[(sid, np.array(h, dtype=np.float64).reshape(3, 3))
                                  for sid, h in obj["surfaces"]],
                    )
                else:
                    raise FormatError(f"ground truth line has unknown kind {kind!r}")
        return cls(objects, images, seed)


@dataclass
class SynthResult:
    dataset: Dataset
    queries: Dataset
    ground_truth: GroundTruth
    scene: Scene


# ---------------------------------------------------------------------------
# generation

def _sample_prototypes(rng: np.random.Generator, count: int, dim: int,
                       margin: float, existing: list[np.ndarray]) -> np.ndarray:
    """Rejection-sample descriptor prototypes with a global pairwise L2 floor."""
    out = np.empty((count, dim))
    pool = list(existing)
    attempts_left = 400 * count + 400
    for i in range(count):
        while True:
            attempts_left -= 1
            if attempts_left < 0:
                raise ValidationError(
                    f"cannot place descriptor prototypes with margin {margin} "
                    f"in dimension {dim}; lower the margin or raise the dimension")
            cand = rng.uniform(0.25, 1.0, size=dim)
            if all(np.linalg.norm(cand - p) >= margin for p in pool):
                break
        out[i] = cand
        pool.append(cand)
    return out


def _window_homography(rng: np.random.Generator, window: tuple[float, float, float, float],
                       target: tuple[float, float, float, float], jitter: float) -> np.ndarray:
    """Exact homography sending a surface window onto a jittered quad inside
    the target frame box."""
    wx, wy, ww, wh = window
    tx, ty, tw, th = target
    src = np.array([[wx, wy], [wx + ww, wy], [wx + ww, wy + wh], [wx, wy + wh]])
    dst = np.array([[tx, ty], [tx + tw, ty], [tx + tw, ty + th], [tx, ty + th]],
                   dtype=np.float64)
    # pull each corner inward by an independent jitter so the map gains a
    # mild perspective component but the quad stays inside the box
    inward = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=np.float64)
    dst = dst + inward * rng.uniform(0.0, jitter, size=(4, 2)) * np.array([tw, th])
    h = _dlt(src, dst)
    if h is None:
        raise ValidationError("degenerate view window")
    return h


def render_view(scene: Scene, view: ViewSpec, frame: FrameConfig) -> ImageRecord:
    """Materialize a view: project constellations, apply the noise model."""
    rng = np.random.default_rng(view.noise_seed)
    width, height = float(frame.width), float(frame.height)
    features: list[LocalFeature] = []
    for surface_id, h in view.surfaces:
        surface = scene.surfaces[surface_id]
        ones = np.ones((surface.positions.shape[0], 1))
        hom = np.hstack([surface.positions, ones]) @ h.T
        w = hom[:, 2]
        # sign of w is a free parameter of the normalized homography, so
        # visibility only requires w away from zero, not positive
        valid = np.abs(w) > 1e-9
        pts = np.full((len(w), 2), np.nan)
        pts[valid] = hom[valid, :2] / w[valid, None]
        in_frame = valid & (pts[:, 0] >= 0) & (pts[:, 0] <= width) \
            & (pts[:, 1] >= 0) & (pts[:, 1] <= height)
        # one dropout draw per constellation point keeps the stream aligned
        # across views regardless of what is visible
        drops = rng.random(len(w)) < view.dropout
        for i in np.where(in_frame & ~drops)[0]:
            proto = surface.prototypes[i]
            if view.sigma > 0:
                desc = np.clip(proto + rng.normal(0.0, view.sigma, size=proto.shape), 0.0, None)
            else:
                desc = proto.copy()
            features.append(LocalFeature(
                x=float(pts[i, 0]), y=float(pts[i, 1]),
                scale=float(rng.uniform(2.0, 6.0)),
                orientation=float(rng.uniform(0.0, 2.0 * np.pi)),
                descriptor=desc.astype(np.float32),
            ))
    dim = scene.surfaces[view.surfaces[0][0]].prototypes.shape[1] if view.surfaces else 0
    for _ in range(view.distractors):
        features.append(LocalFeature(
            x=float(rng.uniform(0.0, width)), y=float(rng.uniform(0.0, height)),
            scale=float(rng.uniform(2.0, 6.0)),
            orientation=float(rng.uniform(0.0, 2.0 * np.pi)),
            descriptor=rng.uniform(0.0, 1.0, size=dim).astype(np.float32),
        ))
    obj = scene.objects[view.object_id]
    return ImageRecord(
        image_id=view.image_id, width=frame.width, height=frame.height,
        features=features, owner_id=view.owner_id, title=view.title,
        tags=list(view.tags), category=obj.category, source="synthetic",
    )


def _misspell(name: str, rng: np.random.Generator) -> str:
    letters = [i for i, c in enumerate(name) if c.isalpha()]
    if len(letters) < 2:
        return name + "e"
    pos = int(rng.integers(len(letters) - 1))
    i, j = letters[pos], letters[pos + 1]
    chars = list(name)
    chars[i], chars[j] = chars[j], chars[i]
    out = "".join(chars)
    return out if out != name else out + "e"


class _Generator:
    def __init__(self, config: GeneratorConfig, seed: int):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.surfaces: dict[str, Surface] = {}
        self.objects: dict[str, SceneObject] = {}
        self.views: list[ViewSpec] = []
        self.gt_images: dict[str, GtImage] = {}
        self.prototype_pool: list[np.ndarray] = []
        self.n_objects = 0
        self.n_images = 0
        self.n_queries = 0
        self.spam_owner_id = "user-00" if config.spam_owner else None

    # -- id helpers ----------------------------------------------------------
    def _next_object_id(self) -> str:
        self.n_objects += 1
        return f"obj-{self.n_objects:03d}"

    def _next_image_id(self, is_query: bool) -> str:
        if is_query:
            self.n_queries += 1
            return f"qry-{self.n_queries:04d}"
        self.n_images += 1
        return f"img-{self.n_images:04d}"

    def _owner(self) -> str:
        return f"user-{int(self.rng.integers(self.config.num_owners)):02d}"

    def _constellation(self, surface_id: str, width: float, height: float,
                       specs: list[tuple[float, float, float, float, int]]) -> Surface:
        """specs: (x0, y0, w, h, count) rectangles to fill with features."""
        dim = self.config.descriptor_dim
        positions = []
        prototypes = []
        for x0, y0, w, h, count in specs:
            pos = np.column_stack([
                self.rng.uniform(x0, x0 + w, size=count),
                self.rng.uniform(y0, y0 + h, size=count),
            ])
            proto = _sample_prototypes(self.rng, count, dim,
                                       self.config.prototype_margin,
                                       self.prototype_pool)
            self.prototype_pool.extend(list(proto))
            positions.append(pos)
            prototypes.append(proto)
        surface = Surface(
            surface_id=surface_id, width=width, height=height,
            positions=np.vstack(positions) if positions else np.zeros((0, 2)),
            prototypes=np.vstack(prototypes) if prototypes else np.zeros((0, dim)),
        )
        self.surfaces[surface_id] = surface
        return surface

    # -- tag emission ---------------------------------------------------------
    def _emit_tags(self, obj: SceneObject, profile: TagProfile,
                   owner: str) -> tuple[list[str], str]:
        tags: list[str] = []
        if self.rng.random() < profile.correct:
            name = obj.true_name
            if obj.parent_id is not None and self.rng.random() < profile.parent_name:
                name = self.objects[obj.parent_id].true_name
            tags.append(name)
        if self.rng.random() < profile.misspell:
            tags.append(_misspell(obj.true_name, self.rng))
        for _ in range(int(self.rng.poisson(profile.generic))):
            tags.append(GENERIC_TAG_POOL[int(self.rng.integers(len(GENERIC_TAG_POOL)))])
        if self.spam_owner_id is not None and owner == self.spam_owner_id:
            tags.append(f"album-{self.spam_owner_id}")
        title = obj.true_name.title() if self.rng.random() < profile.title else ""
        return tags, title

    # -- view creation ---------------------------------------------------------
    def _make_view(self, obj: SceneObject, surfaces: list[tuple[str, np.ndarray]],
                   profile: TagProfile, is_query: bool,
                   duplicate_of: str | None = None) -> ViewSpec:
        owner = self._owner()
        tags, title = self._emit_tags(obj, profile, owner)
        noise = self.config.noise
        view = ViewSpec(
            image_id=self._next_image_id(is_query),
            object_id=obj.object_id,
            owner_id=owner,
            surfaces=surfaces,
            sigma=noise.descriptor_sigma,
            dropout=noise.dropout,
            distractors=noise.distractors,
            tags=tags,
            title=title,
            noise_seed=int(self.rng.integers(2 ** 62)),
            is_query=is_query,
            duplicate_of=duplicate_of,
        )
        self.views.append(view)
        self.gt_images[view.image_id] = GtImage(
            image_id=view.image_id, object_id=obj.object_id,
            category=obj.category, surfaces=surfaces,
            is_query=is_query, duplicate_of=duplicate_of,
        )
        return view

    def _flat_window(self, obj: SceneObject) -> tuple[float, float, float, float]:
        if obj.archetype == "facade-detail":
            return obj.detail_rect
        pw, ph = obj.plane
        return (0.0, 0.0, pw, ph)

    def _flat_view_surfaces(self, obj: SceneObject,
                            window: tuple[float, float, float, float]) -> list:
        frame = self.config.frame
        surface_id = obj.surface_ids[0]
        h = _window_homography(self.rng, window,
                               (0.0, 0.0, float(frame.width), float(frame.height)),
                               self.config.view_jitter)
        return [(surface_id, h)]

    def _solid_view_surfaces(self, obj: SceneObject, primary_face: int) -> list:
        frame = self.config.frame
        fw, fh = float(frame.width), float(frame.height)
        secondary_face = (primary_face + 1) % obj.n_faces
        surfaces = []
        spans = [(0.0, 0.0, 0.58 * fw, fh), (0.60 * fw, 0.0, 0.40 * fw, fh)]
        for face, span in zip((primary_face, secondary_face), spans):
            surface = self.surfaces[obj.surface_ids[face]]
            h = _window_homography(self.rng, (0.0, 0.0, surface.width, surface.height),
                                   span, self.config.view_jitter)
            surfaces.append((obj.surface_ids[face], h))
        return surfaces

    def _panorama_window(self, obj: SceneObject, t: float,
                         frac: float) -> tuple[float, float, float, float]:
        pw, ph = obj.plane
        ww = frac * pw
        x0 = t * (pw - ww)
        return (x0, 0.0, ww, ph)

    # -- groups ------------------------------------------------------------------
    def _view_count(self, group: ObjectGroupConfig) -> int:
        if group.views_power_law is None:
            return group.views
        pl = group.views_power_law
        u = self.rng.random()
        raw = pl.min_views * (1.0 - u) ** (-1.0 / (pl.alpha - 1.0))
        return int(min(pl.max_views, max(pl.min_views, round(raw))))

    def build_group(self, group: ObjectGroupConfig) -> None:
        profile = group.tags or self.config.tags
        for _ in range(group.count):
            if group.archetype == "solid-3d":
                self._build_solid(group, profile)
            else:
                self._build_flat(group, profile)

    def _build_flat(self, group: ObjectGroupConfig, profile: TagProfile) -> None:
        plane = (group.plane_w or _PLANE_DEFAULTS[group.archetype][0],
                 group.plane_h or _PLANE_DEFAULTS[group.archetype][1])
        object_id = self._next_object_id()
        word = group.name_word or ARCHETYPE_NAME_WORD[group.archetype]
        obj = SceneObject(
            object_id=object_id, archetype=group.archetype,
            true_name=f"{word}-{object_id.split('-')[1]}",
            category=group.category or ARCHETYPE_CATEGORY[group.archetype],
            plane=plane, surface_ids=[f"srf-{object_id}"],
        )
        self.objects[object_id] = obj

        specs = [(0.0, 0.0, plane[0], plane[1], group.features)]
        details: list[SceneObject] = []
        if group.details is not None:
            det = group.details
            if det.count * det.rect_w > 0.95:
                raise ValidationError(
                    "detail rectangles would overlap; lower count or rect_w")
            slot = 1.0 / det.count
            for d in range(det.count):
                rx = (d * slot + (slot - det.rect_w) / 2.0) * plane[0]
                ry = (0.5 - det.rect_h / 2.0) * plane[1]
                rect = (rx, ry, det.rect_w * plane[0], det.rect_h * plane[1])
                child_id = self._next_object_id()
                child = SceneObject(
                    object_id=child_id, archetype="facade-detail",
                    true_name=f"{ARCHETYPE_NAME_WORD['facade-detail']}-{child_id.split('-')[1]}",
                    category=ARCHETYPE_CATEGORY["facade-detail"],
                    parent_id=object_id, plane=plane, detail_rect=rect,
                    surface_ids=obj.surface_ids,
                )
                self.objects[child_id] = child
                details.append(child)
                specs.append((rect[0], rect[1], rect[2], rect[3], det.features))
        self._constellation(obj.surface_ids[0], plane[0], plane[1], specs)

        n_views = self._view_count(group)
        for v in range(n_views):
            if group.archetype == "panorama":
                t = v / max(1, n_views - 1)
                window = self._panorama_window(obj, t, group.window_frac)
            else:
                window = self._flat_window(obj)
            self._make_view(obj, self._flat_view_surfaces(obj, window), profile, False)
        query_views = []
        for _ in range(group.queries):
            if group.archetype == "panorama":
                window = self._panorama_window(obj, self.rng.random(), group.window_frac)
            else:
                window = self._flat_window(obj)
            query_views.append(self._make_view(
                obj, self._flat_view_surfaces(obj, window), profile, True))
        self._add_duplicates(obj, query_views, group.query_duplicates, profile)

        if group.details is not None:
            det = group.details
            det_profile = det.tags or profile
            for child in details:
                for _ in range(det.views):
                    window = self._flat_window(child)
                    self._make_view(child, self._flat_view_surfaces(child, window),
                                    det_profile, False)
                child_queries = []
                for _ in range(det.queries):
                    window = self._flat_window(child)
                    child_queries.append(self._make_view(
                        child, self._flat_view_surfaces(child, window), det_profile, True))

    def _build_solid(self, group: ObjectGroupConfig, profile: TagProfile) -> None:
        if group.faces < 3:
            raise ValidationError("solid-3d objects need at least 3 faces")
        object_id = self._next_object_id()
        word = group.name_word or ARCHETYPE_NAME_WORD["solid-3d"]
        face_plane = (group.plane_w or _PLANE_DEFAULTS["solid-3d"][0],
                      group.plane_h or _PLANE_DEFAULTS["solid-3d"][1])
        surface_ids = [f"srf-{object_id}-f{f}" for f in range(group.faces)]
        obj = SceneObject(
            object_id=object_id, archetype="solid-3d",
            true_name=f"{word}-{object_id.split('-')[1]}",
            category=group.category or ARCHETYPE_CATEGORY["solid-3d"],
            n_faces=group.faces, surface_ids=surface_ids,
        )
        self.objects[object_id] = obj
        per_face = max(4, group.features // group.faces)
        for sid in surface_ids:
            self._constellation(sid, face_plane[0], face_plane[1],
                                [(0.0, 0.0, face_plane[0], face_plane[1], per_face)])

        weights = group.face_weights
        if weights is not None:
            if len(weights) != group.faces:
                raise ValidationError("face_weights length must equal faces")
            weights = np.asarray(weights, dtype=np.float64)
            weights = weights / weights.sum()
        n_views = self._view_count(group)
        for _ in range(n_views):
            if weights is None:
                face = int(self.rng.integers(group.faces))
            else:
                face = int(self.rng.choice(group.faces, p=weights))
            self._make_view(obj, self._solid_view_surfaces(obj, face), profile, False)
        query_views = []
        for q in range(group.queries):
            face = q % group.faces   # queries sweep every face
            query_views.append(self._make_view(
                obj, self._solid_view_surfaces(obj, face), profile, True))
        self._add_duplicates(obj, query_views, group.query_duplicates, profile)

    def _add_duplicates(self, obj: SceneObject, query_views: list[ViewSpec],
                        count: int, profile: TagProfile) -> None:
        if count and not query_views:
            raise ValidationError(
                f"{obj.object_id}: query_duplicates require at least one query")
        for _ in range(count):
            base = query_views[int(self.rng.integers(len(query_views)))]
            self._make_view(obj, base.surfaces, profile, True,
                            duplicate_of=base.image_id)

    # -- assembly ---------------------------------------------------------------
    def run(self) -> SynthResult:
        if not self.config.groups:
            raise ValidationError("generator config declares no object groups")
        for group in self.config.groups:
            self.build_group(group)
        scene = Scene(surfaces=self.surfaces, objects=self.objects, views=self.views)
        records = []
        query_records = []
        for view in self.views:
            record = render_view(scene, view, self.config.frame)
            (query_records if view.is_query else records).append(record)
        dim = self.config.descriptor_dim
        dataset = Dataset.from_records(records, dim)
        queries = Dataset.from_records(query_records, dim)
        ground_truth = GroundTruth(self.objects, self.gt_images, seed=self.seed)
        return SynthResult(dataset=dataset, queries=queries,
                           ground_truth=ground_truth, scene=scene)


def generate_dataset(config: GeneratorConfig, seed: int) -> SynthResult:
    """Deterministic: the same (config, seed) yields bit-identical datasets."""
    return _Generator(config, seed).run()

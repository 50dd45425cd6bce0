"""
Procedural scenes: colored axis-aligned boxes standing in a walled room,
surface-sampled into a noisy point cloud, with template captions.

Every object has a unique color/size class within its scene. Each object gets
five references: an attribute caption, a caption relating it to its nearest
neighbour, a caption placing it within the whole room, a caption giving its
direction and height relative to the nearest neighbour, and a caption about
the walls it stands by or the number of boxes around it.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from core_apps.common.exceptions import SceneGenerationError, ValidationFailure
from core_apps.common.runtime import ordered_map
from core_apps.datasynth.vocabulary import COLORS, DIRECTIONS, NUMBER_WORDS, SIZES, Vocabulary
from core_apps.geom.structures import Box3D, Points

logger = logging.getLogger(__name__)

ROOM = (10.0, 10.0, 3.0)
NOISE_SIGMA = 0.01
BOX_SURFACE_SHARE = 0.6
NEAR_DISTANCE = ROOM[0] / 2
MIN_GAP = 0.2
MAX_PLACEMENT_TRIES = 1000
MAX_OBJECTS = 8
N_CLASSES = len(COLORS) * len(SIZES)

# per-axis extent ranges
SIZE_RANGES = {
    "small": ((0.4, 0.8), (0.4, 0.8), (0.3, 0.6)),
    "large": ((1.0, 1.6), (1.0, 1.6), (0.8, 1.3)),
}
COLOR_RGB = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.2),
    "blue": (0.1, 0.2, 0.9),
    "yellow": (0.9, 0.9, 0.1),
    "white": (1.0, 1.0, 1.0),
    "black": (0.05, 0.05, 0.05),
}
FLOOR_RGB = (0.5, 0.5, 0.5)
WALL_RGB = (0.8, 0.75, 0.7)
# x points east, y points north
DIRECTION_VECTORS = {
    "northwest": (-1.0, 1.0),
    "northeast": (1.0, 1.0),
    "southwest": (-1.0, -1.0),
    "southeast": (1.0, -1.0),
    "north": (0.0, 1.0),
    "south": (0.0, -1.0),
    "east": (1.0, 0.0),
    "west": (-1.0, 0.0),
}
REGION_DEAD_ZONE = 1.0
WALL_DISTANCE = 1.5
HEIGHT_TOLERANCE = 0.15
LOW_BOX_HEIGHT = 0.7


def class_name(class_id):
    """
    Example:
        >>> class_name(3)
        'green large'
    """
    color, size = divmod(class_id, len(SIZES))
    return f"{COLORS[color]} {SIZES[size]}"


@dataclass(eq=False)
class SceneSample:
    """
    **Attributes:**
        - seed (int): seed the scene was generated from.
        - xyz (ndarray): ``[n, 3]`` float32 point coordinates.
        - feats (ndarray): ``[n, 3]`` float32 RGB colors.
        - boxes (list[Box3D]): ground-truth objects.
        - captions (list[list[tuple]]): per object, reference token ids ending in EOS.
    """

    seed: int
    xyz: np.ndarray
    feats: np.ndarray
    boxes: list
    captions: list = field(default_factory=list)

    @property
    def points(self):
        feats = torch.from_numpy(self.feats) if self.feats.shape[1] else None
        return Points(torch.from_numpy(self.xyz), feats)

    def caption_texts(self, vocab):
        return [[vocab.decode(ids) for ids in refs] for refs in self.captions]

    def __eq__(self, other):
        return (
            isinstance(other, SceneSample)
            and self.seed == other.seed
            and np.array_equal(self.xyz, other.xyz)
            and np.array_equal(self.feats, other.feats)
            and self.boxes == other.boxes
            and self.captions == other.captions
        )


def _f32(values):
    return tuple(float(v) for v in np.asarray(values, dtype=np.float32))


def place_boxes(rng, n_objects):
    """
    Rejection-sample non-overlapping boxes resting on the floor.

    Raises:
        SceneGenerationError: an object could not be placed within the try budget.
    """
    classes = rng.choice(N_CLASSES, size=n_objects, replace=False)
    boxes = []
    for class_id in classes.tolist():
        size_name = SIZES[class_id % len(SIZES)]
        for attempt in range(MAX_PLACEMENT_TRIES):
            size = np.array([rng.uniform(lo, hi) for lo, hi in SIZE_RANGES[size_name]])
            xy = [rng.uniform(s / 2, extent - s / 2) for s, extent in zip(size[:2], ROOM[:2])]
            center = np.array([xy[0], xy[1], size[2] / 2])
            candidate = Box3D(_f32(center), _f32(size), class_id)
            if all(_separated(candidate, other) for other in boxes):
                boxes.append(candidate)
                break
        else:
            raise SceneGenerationError(
                f"Could not place object {len(boxes) + 1} of {n_objects} "
                f"after {MAX_PLACEMENT_TRIES} tries."
            )
        if attempt:
            logger.debug("placed %s after %d rejected tries", class_name(class_id), attempt)
    return boxes


def _separated(a, b):
    return any(
        a.maximum[axis] + MIN_GAP <= b.minimum[axis] or b.maximum[axis] + MIN_GAP <= a.minimum[axis]
        for axis in (0, 1)
    )


def _sample_box_surface(rng, box, n):
    # top and the four sides; the bottom rests on the floor
    lo, hi = np.array(box.minimum), np.array(box.maximum)
    sx, sy, sz = box.size
    areas = np.array([sx * sy, sy * sz, sy * sz, sx * sz, sx * sz])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    pts = rng.uniform(lo, hi, size=(n, 3))
    pts[face == 0, 2] = hi[2]
    pts[face == 1, 0] = lo[0]
    pts[face == 2, 0] = hi[0]
    pts[face == 3, 1] = lo[1]
    pts[face == 4, 1] = hi[1]
    return pts


def _sample_room_surface(rng, n):
    w, d, h = ROOM
    areas = np.array([w * d, d * h, d * h, w * h, w * h])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    pts = rng.uniform((0.0, 0.0, 0.0), ROOM, size=(n, 3))
    pts[face == 0, 2] = 0.0
    pts[face == 1, 0] = 0.0
    pts[face == 2, 0] = w
    pts[face == 3, 1] = 0.0
    pts[face == 4, 1] = d
    return pts, face


def _name(box):
    return f"the {class_name(box.class_id)} box"


def _room_region(center):
    dx, dy = center[0] - ROOM[0] / 2, center[1] - ROOM[1] / 2
    ns = "north" if dy > REGION_DEAD_ZONE else "south" if dy < -REGION_DEAD_ZONE else ""
    ew = "east" if dx > REGION_DEAD_ZONE else "west" if dx < -REGION_DEAD_ZONE else ""
    return ns + ew


def _aligned_direction(dx, dy, directions=DIRECTIONS):
    def alignment(direction):
        ux, uy = DIRECTION_VECTORS[direction]
        return (dx * ux + dy * uy) / math.hypot(ux, uy)

    return max(directions, key=alignment)


def _best_aligned(center, directions):
    # the direction pointing most nearly from the room center to the object
    return _aligned_direction(center[0] - ROOM[0] / 2, center[1] - ROOM[1] / 2, directions)


def _relative_caption(name, box, other):
    direction = _aligned_direction(box.center[0] - other.center[0], box.center[1] - other.center[1])
    verb = "lies" if box.size[2] < LOW_BOX_HEIGHT else "stands"
    height = box.size[2] - other.size[2]
    if height > HEIGHT_TOLERANCE:
        compare = "taller than"
    elif height < -HEIGHT_TOLERANCE:
        compare = "shorter than"
    else:
        compare = "as tall as"
    return f"{name} {verb} {direction} of {_name(other)} and is {compare} it"


def _boundary_caption(name, box, n_boxes):
    lo, hi = box.minimum, box.maximum
    ns = "south" if lo[1] < WALL_DISTANCE else "north" if hi[1] > ROOM[1] - WALL_DISTANCE else ""
    ew = "west" if lo[0] < WALL_DISTANCE else "east" if hi[0] > ROOM[0] - WALL_DISTANCE else ""
    if ns and ew:
        return f"{name} is in the {ns + ew} corner of the room"
    if ns or ew:
        return f"{name} is close to the {ns or ew} wall"
    if n_boxes < 2:
        return None
    return f"there are {NUMBER_WORDS[n_boxes - 2]} boxes in the room and {name} is one of them"


def compose_captions(boxes):
    """
    Reference captions for every box.

    Returns:
        list[list[str]]: per box ``[attribute, relational, global, relative, boundary]``
        captions; the relational and relative ones need a second box.
    """
    extremes = {}
    for direction in DIRECTIONS:
        ux, uy = DIRECTION_VECTORS[direction]
        projections = [b.center[0] * ux + b.center[1] * uy for b in boxes]
        extremes[direction] = int(np.argmax(projections))

    captions = []
    for i, box in enumerate(boxes):
        name = _name(box)
        refs = [name]
        others = [b for j, b in enumerate(boxes) if j != i]
        if others:
            nearest = min(others, key=lambda b: math.dist(box.center[:2], b.center[:2]))
            if math.dist(box.center[:2], nearest.center[:2]) <= NEAR_DISTANCE:
                refs.append(f"{name} is next to {_name(nearest)}")
            else:
                refs.append(f"{name} is far from {_name(nearest)} across the room")
        won = [d for d in DIRECTIONS if extremes[d] == i]
        if won:
            refs.append(f"{name} is the {_best_aligned(box.center, won)} most box in the room")
        else:
            region = _room_region(box.center)
            if region:
                refs.append(f"{name} is in the {region} part of the room")
            else:
                refs.append(f"{name} is in the middle of the room")
        if others:
            refs.append(_relative_caption(name, box, nearest))
        boundary = _boundary_caption(name, box, len(boxes))
        if boundary:
            refs.append(boundary)
        captions.append(refs)
    return captions


def make_scene(seed, n_objects, n_points=2048, vocab=None):
    """
    Generate one scene; the same ``seed`` always yields the same sample.

    Raises:
        ValidationFailure: ``n_objects`` outside ``[2, 8]``.
        SceneGenerationError: placement failed.
    """
    if not 2 <= n_objects <= MAX_OBJECTS:
        raise ValidationFailure(f"n_objects must be in [2, {MAX_OBJECTS}], got {n_objects}.")
    vocab = vocab or Vocabulary.default()
    rng = np.random.default_rng(seed)
    boxes = place_boxes(rng, n_objects)

    n_box_points = int(round(BOX_SURFACE_SHARE * n_points))
    areas = np.array([b.size[0] * b.size[1] + 2 * b.size[2] * (b.size[0] + b.size[1]) for b in boxes])
    per_box = rng.multinomial(n_box_points, areas / areas.sum())
    xyz_parts, rgb_parts = [], []
    for box, count in zip(boxes, per_box.tolist()):
        xyz_parts.append(_sample_box_surface(rng, box, count))
        rgb_parts.append(np.tile(COLOR_RGB[COLORS[box.class_id // len(SIZES)]], (count, 1)))
    room_xyz, room_face = _sample_room_surface(rng, n_points - n_box_points)
    xyz_parts.append(room_xyz)
    rgb_parts.append(np.where((room_face == 0)[:, None], FLOOR_RGB, WALL_RGB))

    xyz = np.concatenate(xyz_parts)
    noise = np.clip(rng.normal(0.0, NOISE_SIGMA, size=xyz.shape), -3 * NOISE_SIGMA, 3 * NOISE_SIGMA)
    xyz = (xyz + noise).astype(np.float32)
    feats = np.concatenate(rgb_parts).astype(np.float32)
    captions = [
        [tuple(vocab.encode(text)) for text in refs] for refs in compose_captions(boxes)
    ]
    return SceneSample(int(seed), xyz, feats, boxes, captions)


def scene_plan(dataset_seed, index, objects_min, objects_max):
    """``(scene_seed, n_objects)`` of scene ``index``, derived from ``(dataset_seed, index)``."""
    rng = np.random.default_rng([dataset_seed, index])
    n_objects = int(rng.integers(objects_min, objects_max + 1))
    return int(rng.integers(0, 2**32)), n_objects


def make_dataset(dataset_seed, n_scenes, objects_min=2, objects_max=MAX_OBJECTS, n_points=2048, threads=1):
    """Generate ``n_scenes`` scenes, in parallel across scenes, in index order."""

    def build(index):
        scene_seed, n_objects = scene_plan(dataset_seed, index, objects_min, objects_max)
        return make_scene(scene_seed, n_objects, n_points)

    scenes = ordered_map(build, range(n_scenes), threads)
    logger.info("generated %d scenes (seed %d, %d points each)", n_scenes, dataset_seed, n_points)
    return scenes

"""Planar quasi-static insertion environment.

World frame: x lateral, z vertical (up positive). The end-effector carries a
rigid rectangular peg whose tip-center coincides with the EE origin (shifted
laterally for asymmetric connectors). Sockets are axis-aligned slots with
optional 45-degree chamfers cut into the mouth. Contact is resolved
quasi-statically: the commanded pose is approached in substeps, penetrating
poses are projected back to the contact manifold, and the reported wrench is
stiffness times the commanded penetration plus Coulomb friction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(t: float) -> float:
    """Wrap to (-pi, pi]. Values already in range pass through unchanged."""
    if -math.pi < t <= math.pi:
        return t
    return math.pi - ((math.pi - t) % TWO_PI)


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    z: float = 0.0
    theta: float = 0.0

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.z,
            self.z + s * other.x + c * other.z,
            wrap_angle(self.theta + other.theta),
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.x + s * self.z),
                     -(-s * self.x + c * self.z),
                     wrap_angle(-self.theta))

    def xform_point(self, px: float, pz: float):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return (self.x + c * px - s * pz, self.z + s * px + c * pz)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.theta])


def task_relative(p: Pose2, z_frame: Pose2) -> Pose2:
    """Express p in the task frame: z_frame^-1 o p."""
    return z_frame.inverse().compose(p)


def episode_relative(p: Pose2, p0: Pose2) -> Pose2:
    """Express p relative to the episode start pose."""
    return task_relative(p, p0)


@dataclass(frozen=True)
class Twist2:
    vx: float = 0.0
    vz: float = 0.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vz, self.omega])


@dataclass(frozen=True)
class Wrench2:
    fx: float = 0.0
    fz: float = 0.0
    tau: float = 0.0

    def magnitude(self) -> float:
        return math.hypot(self.fx, self.fz)

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fz, self.tau])


ZERO_WRENCH = Wrench2()


@dataclass(frozen=True)
class TaskSpec:
    """Parametric socket/peg pairing. Lengths in meters, stiffness N/m."""

    id: str
    task_frame: Pose2  # socket mouth center; geometry assumes theta == 0
    socket_width: float
    peg_width: float
    socket_depth: float
    chamfer: float = 0.0
    asymmetry_offset: float = 0.0  # lateral peg offset relative to the EE axis
    z_constrained: bool = False  # no chamfer: part rests on top unless aligned
    contact_stiffness: float = 3000.0
    friction_coeff: float = 0.3

    def __post_init__(self):
        if not self.peg_width < self.socket_width:
            raise ValueError("peg must be narrower than socket")
        if self.socket_depth <= 0 or self.contact_stiffness <= 0:
            raise ValueError("depth and stiffness must be positive")
        if self.z_constrained and self.chamfer != 0.0:
            raise ValueError("z-constrained tasks have no chamfer")

    @property
    def clearance(self) -> float:
        return self.socket_width - self.peg_width


def task_to_doc(t: TaskSpec) -> dict:
    d = {k: getattr(t, k) for k in (
        "id", "socket_width", "peg_width", "socket_depth", "chamfer",
        "asymmetry_offset", "z_constrained", "contact_stiffness",
        "friction_coeff")}
    d["task_frame"] = [t.task_frame.x, t.task_frame.z, t.task_frame.theta]
    return d


def task_from_doc(d: dict) -> TaskSpec:
    d = dict(d)
    fx, fz, ft = d.pop("task_frame")
    return TaskSpec(task_frame=Pose2(fx, fz, ft), **d)


def save_task_set(path, train, eval_) -> None:
    with open(path, "w") as f:
        json.dump({"train": [task_to_doc(t) for t in train],
                   "eval": [task_to_doc(t) for t in eval_]}, f, indent=1)


def load_task_set(path):
    with open(path) as f:
        doc = json.load(f)
    return ([task_from_doc(d) for d in doc["train"]],
            [task_from_doc(d) for d in doc["eval"]])


@dataclass
class EnvConfig:
    dt: float = 0.1  # 10 Hz control
    max_dxz: float = 0.01  # per-step translation bound (m)
    max_dtheta: float = math.radians(10.0)  # per-step rotation bound
    peg_height: float = 0.04
    workspace_halfwidth: float = 0.06  # around the task frame, x
    workspace_top: float = 0.06  # above the mouth plane
    workspace_theta: float = math.radians(35.0)
    start_halfwidth: float = 0.02
    start_z_range: tuple = (0.02, 0.04)  # above the mouth plane
    start_theta: float = math.radians(5.0)
    # success thresholds
    success_depth_frac: float = 0.05  # eps_d
    success_theta: float = math.radians(9.0)
    success_lateral_frac: float = 1.0  # eps_x as a multiple of clearance
    # contact resolution
    substep_len: float = 0.0025
    substep_angle: float = math.radians(2.5)
    # camera / image
    image_size: int = 32
    view_half_extent: float = 0.024  # 1.5 mm per pixel
    embed_dim: int = 64
    embed_seed: int = 20240901
    # disturbance scaling (fractions of task clearance / degrees)
    noise_trans_lo: float = 1.0
    noise_trans_hi: float = 2.0
    noise_rot_lo: float = math.radians(1.0)
    noise_rot_hi: float = math.radians(3.0)
    distractor_count: int = 5
    # task-frame estimates come from kinesthetic guidance, never exact:
    # per-episode error magnitude range (m) and rotation bound (rad)
    frame_error_mag: tuple = (0.001, 0.003)
    frame_error_rot: float = math.radians(0.5)


@dataclass
class SimState:
    ee_pose: Pose2
    ee_twist: Twist2
    last_wrench: Wrench2
    step_index: int
    task: TaskSpec
    rng: np.random.Generator
    start_pose: Pose2  # episode p0, used for episode-relative observations
    in_contact: bool = False


@dataclass(frozen=True)
class Disturbance:
    """Evaluation-time perturbations: frame estimate noise + visual clutter."""

    frame_noise: Pose2 = Pose2()
    visual_distractors: int = 0
    distractor_seed: int = 0


NO_DISTURBANCE = Disturbance()


def sample_disturbance(task: TaskSpec, cfg: EnvConfig,
                       rng: np.random.Generator) -> Disturbance:
    """Frame noise scaled by the task clearance, rotation in degrees range."""
    mag = rng.uniform(cfg.noise_trans_lo, cfg.noise_trans_hi) * task.clearance
    ang = rng.uniform(0.0, TWO_PI)
    rot = rng.uniform(cfg.noise_rot_lo, cfg.noise_rot_hi)
    rot *= 1.0 if rng.uniform() < 0.5 else -1.0
    return Disturbance(
        frame_noise=Pose2(mag * math.cos(ang), mag * math.sin(ang), rot),
        visual_distractors=cfg.distractor_count,
        distractor_seed=int(rng.integers(0, 2 ** 31 - 1)),
    )


# ---------------------------------------------------------------------------
# geometry

def _peg_corners_local(task: TaskSpec, cfg: EnvConfig):
    ax = task.asymmetry_offset
    hw = task.peg_width / 2.0
    return ((ax - hw, 0.0), (ax + hw, 0.0), (ax - hw, cfg.peg_height),
            (ax + hw, cfg.peg_height))


def _peg_samples_local(task: TaskSpec, cfg: EnvConfig):
    # tip corners + tip midpoint catch wall/floor/chamfer penetrations;
    # mouth-lip corners are tested against the peg rectangle separately
    ax = task.asymmetry_offset
    hw = task.peg_width / 2.0
    return ((ax - hw, 0.0), (ax + hw, 0.0), (ax, 0.0))


def _socket_corners(task: TaskSpec):
    xc, zc = task.task_frame.x, task.task_frame.z
    w2 = task.socket_width / 2.0
    ch = task.chamfer
    pts = [(xc - w2 - ch, zc), (xc + w2 + ch, zc)]
    if ch > 0.0:
        pts += [(xc - w2, zc - ch), (xc + w2, zc - ch)]
    return pts


def _cavity_halfwidth(task: TaskSpec, z: float) -> float:
    """Half-width of the free opening at height z (z <= mouth plane)."""
    zc = task.task_frame.z
    w2 = task.socket_width / 2.0
    if task.chamfer > 0.0:
        return w2 + min(task.chamfer, max(0.0, z - (zc - task.chamfer)))
    return w2


_SQRT2 = math.sqrt(2.0)


def _entered(n, motion) -> bool:
    # a point can only exit through a face it moved into (strictly)
    if motion is None:
        return True
    scale = abs(motion[0]) + abs(motion[1])
    return n[0] * motion[0] + n[1] * motion[1] < -1e-9 * scale


def point_vs_socket(task: TaskSpec, px: float, pz: float, motion=None):
    """Penetration of a point into the socket solid.

    Returns (depth, (nx, nz)) with the normal pointing out of the solid, or
    None when the point is in free space. When `motion` (the point's travel
    direction this substep) is given, exit faces the point did not move into
    are excluded, so e.g. a corner that sank into a wall top cannot slide
    sideways into the cavity.
    """
    xc, zc = task.task_frame.x, task.task_frame.z
    if pz >= zc:
        return None
    dx = px - xc
    adx = abs(dx)
    floor_z = zc - task.socket_depth
    if pz >= floor_z and adx <= _cavity_halfwidth(task, pz):
        return None
    sgn = 1.0 if dx >= 0.0 else -1.0
    w2 = task.socket_width / 2.0
    ch = task.chamfer
    cands = []
    if adx <= w2:
        # beneath the cavity floor: exit up into the cavity
        cands.append((floor_z - pz, (0.0, 1.0)))
    else:
        cands.append((zc - pz, (0.0, 1.0)))  # up through the wall top
        if pz >= floor_z:
            cands.append((adx - _cavity_halfwidth(task, pz), (-sgn, 0.0)))
        if ch > 0.0 and pz >= zc - ch:
            d = (adx - (pz - zc) - (w2 + ch)) / _SQRT2
            if d >= 0.0:
                cands.append((d, (-sgn / _SQRT2, 1.0 / _SQRT2)))
    valid = [c for c in cands if _entered(c[1], motion)]
    if not valid:
        valid = cands
    return min(valid, key=lambda c: c[0])


def point_vs_peg(task: TaskSpec, cfg: EnvConfig, pose: Pose2,
                 qx: float, qz: float, motion=None):
    """Penetration of a world point into the peg rectangle at `pose`.

    Returns (depth, (nx, nz)) with the peg's resolution direction in world
    frame (the way the peg must translate so the static point exits).
    """
    inv = pose.inverse()
    lx, lz = inv.xform_point(qx, qz)
    ax = task.asymmetry_offset
    hw = task.peg_width / 2.0
    cands_l = [
        (lx - (ax - hw), (1.0, 0.0)),
        ((ax + hw) - lx, (-1.0, 0.0)),
        (lz, (0.0, 1.0)),
        (cfg.peg_height - lz, (0.0, -1.0)),
    ]
    if min(c[0] for c in cands_l) <= 0.0:
        return None
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    cands = [(d, (c * nx - s * nz, s * nx + c * nz)) for d, (nx, nz) in cands_l]
    valid = [cd for cd in cands if _entered(cd[1], motion)]
    if not valid:
        valid = cands
    return min(valid, key=lambda cd: cd[0])


def _find_contacts(task: TaskSpec, cfg: EnvConfig, pose: Pose2, motion=None):
    """All active contacts at `pose` as (depth, push_normal, point_world).

    push_normal is the direction the PEG must translate to resolve.
    """
    contacts = []
    for lx, lz in _peg_samples_local(task, cfg):
        wx, wz = pose.xform_point(lx, lz)
        hit = point_vs_socket(task, wx, wz, motion)
        if hit is not None:
            contacts.append((hit[0], hit[1], (wx, wz)))
    for qx, qz in _socket_corners(task):
        hit = point_vs_peg(task, cfg, pose, qx, qz, motion)
        if hit is not None:
            contacts.append((hit[0], hit[1], (qx, qz)))
    return contacts


def _resolve(task: TaskSpec, cfg: EnvConfig, pose: Pose2, fallback: Pose2,
             motion=None):
    """Project a tentative pose out of penetration (translation only)."""
    touched = []
    for _ in range(8):
        contacts = _find_contacts(task, cfg, pose, motion)
        if not contacts:
            return pose, touched
        depth, n, pt = max(contacts, key=lambda c: c[0])
        touched.append((n, pt))
        pose = Pose2(pose.x + depth * n[0] + 1e-12 * n[0],
                     pose.z + depth * n[1] + 1e-12 * n[1], pose.theta)
    # wedged beyond what translation fixes: refuse the motion
    return fallback, touched


def _maybe_clear(task: TaskSpec, cfg: EnvConfig, pose: Pose2) -> bool:
    # fast reject: peg tip well above the mouth plane cannot touch anything
    reach = (task.peg_width / 2.0 + abs(task.asymmetry_offset) +
             cfg.peg_height) * abs(math.sin(pose.theta)) + 1e-6
    return pose.z - reach > task.task_frame.z


def clip_to_workspace(task: TaskSpec, cfg: EnvConfig, pose: Pose2) -> Pose2:
    xc, zc = task.task_frame.x, task.task_frame.z
    return Pose2(
        min(max(pose.x, xc - cfg.workspace_halfwidth), xc + cfg.workspace_halfwidth),
        min(max(pose.z, zc - task.socket_depth), zc + cfg.workspace_top),
        min(max(pose.theta, -cfg.workspace_theta), cfg.workspace_theta),
    )


# ---------------------------------------------------------------------------
# reset / step / success

def sim_reset(task: TaskSpec, cfg: EnvConfig, seed) -> SimState:
    rng = np.random.default_rng(seed)
    xc, zc = task.task_frame.x, task.task_frame.z
    pose = Pose2(
        float(xc + rng.uniform(-cfg.start_halfwidth, cfg.start_halfwidth)),
        float(zc + rng.uniform(cfg.start_z_range[0], cfg.start_z_range[1])),
        float(rng.uniform(-cfg.start_theta, cfg.start_theta)),
    )
    return SimState(ee_pose=pose, ee_twist=Twist2(), last_wrench=ZERO_WRENCH,
                    step_index=0, task=task, rng=rng, start_pose=pose)


def sim_step(state: SimState, delta: Pose2, cfg: EnvConfig):
    """Apply a local-frame pose displacement through the compliant layer.

    Returns (new_state, wrench, in_contact). Deterministic.
    """
    if not all(math.isfinite(v) for v in (delta.x, delta.z, delta.theta)):
        raise ValueError("non-finite action")
    task = state.task
    d = Pose2(min(max(delta.x, -cfg.max_dxz), cfg.max_dxz),
              min(max(delta.z, -cfg.max_dxz), cfg.max_dxz),
              min(max(delta.theta, -cfg.max_dtheta), cfg.max_dtheta))
    prev = state.ee_pose
    cmd = clip_to_workspace(task, cfg, prev.compose(d))

    # march toward the command in substeps so fast sweeps cannot tunnel
    mv_x, mv_z = cmd.x - prev.x, cmd.z - prev.z
    mv_t = wrap_angle(cmd.theta - prev.theta)
    motion = (mv_x, mv_z) if math.hypot(mv_x, mv_z) > 1e-12 else None
    n_sub = max(1, int(math.ceil(max(math.hypot(mv_x, mv_z) / cfg.substep_len,
                                     abs(mv_t) / cfg.substep_angle))))
    n_sub = min(n_sub, 10)
    pose = prev
    touched = []
    for k in range(1, n_sub + 1):
        if k == n_sub:
            tent = cmd
        else:
            f = k / n_sub
            tent = Pose2(prev.x + f * mv_x, prev.z + f * mv_z,
                         wrap_angle(prev.theta + f * mv_t))
        if _maybe_clear(task, cfg, tent):
            pose = tent
            continue
        # the substep motion includes the correction applied so far
        sub_motion = (tent.x - pose.x, tent.z - pose.z)
        if abs(sub_motion[0]) < 1e-12 and abs(sub_motion[1]) < 1e-12:
            sub_motion = motion
        pose, hits = _resolve(task, cfg, tent, pose, sub_motion)
        if hits:
            touched = hits

    # wrench from the commanded penetration at the final contact set;
    # contacts sharing a normal are one feature (a face landing flat is a
    # single k*d force, not one per sample point)
    fx = fz = tau = 0.0
    in_contact = False
    if touched and not _maybe_clear(task, cfg, cmd):
        groups = {}
        for depth, n, pt in _find_contacts(task, cfg, cmd, motion):
            key = (round(n[0], 6), round(n[1], 6))
            g = groups.setdefault(key, [0.0, 0.0, 0.0, 0.0])
            g[0] = max(g[0], depth)
            g[1] += depth * pt[0]
            g[2] += depth * pt[1]
            g[3] += depth
        k_n = task.contact_stiffness
        mu = task.friction_coeff
        for (nx, nz), (depth, sx, sz, sd) in groups.items():
            in_contact = True
            px, pz = sx / sd, sz / sd
            fn = k_n * depth
            fx_i, fz_i = fn * nx, fn * nz
            # Coulomb friction against this step's tangential slip
            tx, tz = -nz, nx
            slip = (pose.x - prev.x) * tx + (pose.z - prev.z) * tz
            if abs(slip) > 1e-9:
                s = 1.0 if slip > 0.0 else -1.0
                fx_i += -mu * fn * s * tx
                fz_i += -mu * fn * s * tz
            fx += fx_i
            fz += fz_i
            tau += (px - pose.x) * fz_i - (pz - pose.z) * fx_i
    if not in_contact and touched:
        # grazing contact resolved during the march but command ends clear
        in_contact = len(_find_contacts(task, cfg, pose)) > 0
    wrench = Wrench2(fx, fz, tau) if in_contact else ZERO_WRENCH

    twist = Twist2((pose.x - prev.x) / cfg.dt, (pose.z - prev.z) / cfg.dt,
                   wrap_angle(pose.theta - prev.theta) / cfg.dt)
    new_state = replace(state, ee_pose=pose, ee_twist=twist,
                        last_wrench=wrench, step_index=state.step_index + 1,
                        in_contact=in_contact)
    return new_state, wrench, in_contact


def peg_tip(state: SimState) -> tuple:
    """World position of the peg tip center (includes the asymmetry offset)."""
    return state.ee_pose.xform_point(state.task.asymmetry_offset, 0.0)


def compute_success(state: SimState, cfg: EnvConfig) -> bool:
    """Geometric success predicate: seated deep, upright, centered."""
    task = state.task
    tx, tz = peg_tip(state)
    depth = task.task_frame.z - tz
    if depth < (1.0 - cfg.success_depth_frac) * task.socket_depth:
        return False
    if abs(wrap_angle(state.ee_pose.theta - task.task_frame.theta)) > cfg.success_theta:
        return False
    return abs(tx - task.task_frame.x) <= cfg.success_lateral_frac * task.clearance


# ---------------------------------------------------------------------------
# rendering and the frozen image encoder

@dataclass
class SceneImage:
    pixels: np.ndarray  # (H, W) float64 in [0, 1]


def render(state: SimState, disturbance: Disturbance, cfg: EnvConfig) -> SceneImage:
    """Rasterize the scene in an EE-centered, axis-aligned camera window."""
    n = cfg.image_size
    he = cfg.view_half_extent
    ee = state.ee_pose
    ticks = (np.arange(n) + 0.5) / n * (2.0 * he) - he
    xs = ee.x + ticks[None, :]
    zs = ee.z + he - (np.arange(n) + 0.5)[:, None] / n * (2.0 * he)
    img = np.zeros((n, n))

    task = state.task
    xc, zc = task.task_frame.x, task.task_frame.z
    ch, w2 = task.chamfer, task.socket_width / 2.0
    adx = np.abs(xs - xc)
    hw = w2 + np.clip(zs - (zc - ch), 0.0, ch) if ch > 0.0 else w2
    cavity = (zs >= zc - task.socket_depth) & (adx <= hw)
    img[(zs <= zc) & ~cavity] = 0.5

    if disturbance.visual_distractors > 0:
        # clutter concentrated around the mouth, where the servoing looks
        drng = np.random.default_rng(disturbance.distractor_seed)
        for _ in range(disturbance.visual_distractors):
            cx = xc + drng.uniform(-0.025, 0.025)
            cz = zc + drng.uniform(-0.005, 0.025)
            sx = drng.uniform(0.004, 0.014)
            sz = drng.uniform(0.004, 0.014)
            img[(np.abs(xs - cx) <= sx) & (np.abs(zs - cz) <= sz)] = 0.75

    inv = ee.inverse()
    c, s = math.cos(inv.theta), math.sin(inv.theta)
    lx = inv.x + c * xs - s * zs
    lz = inv.z + s * xs + c * zs
    ax = task.asymmetry_offset
    pw2 = task.peg_width / 2.0
    img[(np.abs(lx - ax) <= pw2) & (lz >= 0.0) & (lz <= cfg.peg_height)] = 1.0
    return SceneImage(img)


def write_pgm(img: SceneImage, path) -> None:
    h, w = img.pixels.shape
    data = (np.clip(img.pixels, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5 {w} {h} 255\n".encode())
        f.write(data.tobytes())


class ImageEncoder:
    """Frozen random linear projection of pixels followed by tanh.

    Weights are fixed by the config seed at construction and never trained.
    """

    def __init__(self, cfg: EnvConfig):
        rng = np.random.default_rng(cfg.embed_seed)
        n_in = cfg.image_size * cfg.image_size
        self.w = rng.normal(0.0, 3.0 / math.sqrt(n_in), size=(cfg.embed_dim, n_in))
        self.b = rng.normal(0.0, 0.1, size=cfg.embed_dim)

    def encode(self, img: SceneImage) -> np.ndarray:
        return np.tanh(self.w @ img.pixels.ravel() + self.b)


# ---------------------------------------------------------------------------
# task sets

def make_task_set(frame: Pose2 = Pose2(0.0, 0.10)):
    """Three training archetypes plus eight unseen evaluation variants.

    Training covers the contact patterns: a stiff symmetric slot, a soft
    asymmetric one, and a chamferless part that rests on the surface unless
    aligned. Evaluation variants change widths, clearances, chamfers and
    stiffnesses; "dsub" is the deliberately hard one (minimum clearance plus
    asymmetry).
    """
    train = [
        TaskSpec("peg_medium", frame, socket_width=0.020, peg_width=0.016,
                 socket_depth=0.025, chamfer=0.005, contact_stiffness=3000.0,
                 friction_coeff=0.30),
        TaskSpec("ethernet", frame, socket_width=0.018, peg_width=0.014,
                 socket_depth=0.022, chamfer=0.005, asymmetry_offset=0.004,
                 contact_stiffness=800.0, friction_coeff=0.30),
        TaskSpec("gear_medium", frame, socket_width=0.018, peg_width=0.012,
                 socket_depth=0.015, chamfer=0.0, z_constrained=True,
                 contact_stiffness=2500.0, friction_coeff=0.20),
    ]
    eval_ = [
        TaskSpec("peg_small", frame, socket_width=0.013, peg_width=0.0106,
                 socket_depth=0.018, chamfer=0.0025, contact_stiffness=3000.0,
                 friction_coeff=0.30),
        TaskSpec("peg_large", frame, socket_width=0.026, peg_width=0.021,
                 socket_depth=0.028, chamfer=0.006, contact_stiffness=3500.0,
                 friction_coeff=0.30),
        TaskSpec("ethernet_flip", frame, socket_width=0.018, peg_width=0.014,
                 socket_depth=0.022, chamfer=0.004, asymmetry_offset=-0.004,
                 contact_stiffness=700.0, friction_coeff=0.30),
        TaskSpec("usb", frame, socket_width=0.015, peg_width=0.0126,
                 socket_depth=0.016, chamfer=0.002, asymmetry_offset=0.0025,
                 contact_stiffness=1500.0, friction_coeff=0.35),
        TaskSpec("dsub", frame, socket_width=0.014, peg_width=0.0128,
                 socket_depth=0.016, chamfer=0.001, asymmetry_offset=0.004,
                 contact_stiffness=2500.0, friction_coeff=0.35),
        TaskSpec("gear_small", frame, socket_width=0.011, peg_width=0.0086,
                 socket_depth=0.010, chamfer=0.0, z_constrained=True,
                 contact_stiffness=2500.0, friction_coeff=0.20),
        TaskSpec("gear_large", frame, socket_width=0.022, peg_width=0.0175,
                 socket_depth=0.016, chamfer=0.0, z_constrained=True,
                 contact_stiffness=2500.0, friction_coeff=0.20),
        TaskSpec("peg_shallow_stiff", frame, socket_width=0.019,
                 peg_width=0.0155, socket_depth=0.015, chamfer=0.003,
                 contact_stiffness=6000.0, friction_coeff=0.25),
    ]
    return train, eval_

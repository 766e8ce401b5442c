"""Live teleoperation service.

Per session: operator commands -> CommandSynthesizer -> OnlineFilter
(privileged policy in a shadow sim) -> physics-consistent command ->
proprioceptive tracking policy stepping the deployment simulator. State
streams back to the client at a decimated rate.

TeleopSession is the network-free core (drivable step by step in tests);
the websocket layer adds pacing, queues, and framing. One control task per
session owns both simulators; network tasks exchange data with it only
through latest-wins/drop-oldest queues.
"""

from __future__ import annotations

import asyncio
import json
from collections import deque
from pathlib import Path

import numpy as np

from ..checkpoint import Checkpoint, load_checkpoint
from ..envs import link_force_magnitudes, static_link_forces
from ..filter import OnlineFilter, hold_window
from ..model import RobotModel, link_kinematics, load_builtin_model
from ..obs import build_obs, obs_dim
from ..reward import RewardConfig, reward_terms
from ..rl.policy import act
from ..rl.termination import check_termination
from ..sim import EnvPhysicsParams, SimConfig, batch_control_step
from ..stage import Stage
from .synth import MODES, CommandSynthesizer, SynthError, TeleopCommand

MAX_MESSAGE_BYTES = 4096
_CMD_KEYS = {"type", "mode", "vx", "preset", "pose", "t"}


class TeleopError(ValueError):
    pass


def model_geometry(model: RobotModel) -> dict:
    """Kinematic structure for client-side rendering (hello payload)."""
    return {
        "links": [{
            "name": link.name,
            "parent": int(model.parent_link[i]),
            "joint": int(model.link_joint[i]),
            "anchor": [float(a) for a in model.anchors[i]],
            "length": float(link.length),
            "contact_points": [[float(x), float(z)]
                               for x, z in link.contact_points],
        } for i, link in enumerate(model.links)],
        "ee_links": [int(i) for i in model.ee_idx],
        "standing_height": float(model.standing_root_height),
    }


def _err(message: str, path: str | None = None) -> dict:
    out = {"type": "error", "message": message}
    if path is not None:
        out["path"] = path
    return out


class TeleopSession:
    """One operator's control loop state: synthesizer, filter, tracker."""

    def __init__(self, pmg: Checkpoint, gmt: Checkpoint, *,
                 sim_config: SimConfig | None = None,
                 vx_max: float = 1.0,
                 contact_threshold: float = 1.0):
        if gmt.stage is not Stage.GMT:
            raise TeleopError("the deployment tracker needs a gmt "
                              f"checkpoint, got stage {gmt.stage.value!r}")
        if pmg.model != gmt.model:
            raise TeleopError(f"checkpoint model mismatch: filter is for "
                              f"{pmg.model!r}, tracker for {gmt.model!r}")
        self.filter = OnlineFilter.from_checkpoint(pmg, sim_config=sim_config)
        self.model = self.filter.model
        self.cfg = self.filter.cfg
        if gmt.params.obs_dim != obs_dim(self.model, Stage.GMT):
            raise TeleopError("gmt checkpoint does not match the model's "
                              "proprioceptive observation layout")
        self.gmt = gmt.params
        self.synth = CommandSynthesizer(self.model, dt=self.cfg.control_dt,
                                        vx_max=vx_max)
        self.reward_cfg = RewardConfig()
        self.contact_threshold = float(contact_threshold)

        nominal = EnvPhysicsParams.nominal(self.model, self.cfg)
        self._mu_s = np.array([nominal.mu_static])
        self._mu_d = np.array([nominal.mu_dynamic])
        self._e_rest = np.array([nominal.restitution])
        self._com_off = nominal.com_offset[None]

        self.t = 0.0
        self.overruns = 0
        self.tracker_faults = 0
        self._last_cmd_t = -np.inf
        self._qpos: np.ndarray | None = None

    # -- messages ---------------------------------------------------------

    def hello(self) -> dict:
        return {"type": "hello", "model": self.model.name,
                "joints": list(self.model.joint_names),
                "geometry": model_geometry(self.model)}

    def handle_message(self, raw) -> dict | None:
        """Validate one client frame; returns a reply frame or None.

        Malformed input produces an error frame and never kills the
        session; stale commands are dropped silently.
        """
        data = raw.encode("utf-8") if isinstance(raw, str) else raw
        if len(data) > MAX_MESSAGE_BYTES:
            return _err(f"message exceeds {MAX_MESSAGE_BYTES} bytes")
        try:
            msg = json.loads(data)
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _err("message is not valid JSON")
        if not isinstance(msg, dict):
            return _err("message must be a JSON object")

        kind = msg.get("type")
        if kind == "ping":
            if not isinstance(msg.get("t"), (int, float)):
                return _err("ping needs a numeric 't'", path="t")
            return {"type": "pong", "t": msg["t"]}
        if kind != "cmd":
            return _err(f"unknown message type {kind!r}", path="type")

        unknown = set(msg) - _CMD_KEYS
        if unknown:
            return _err("unknown field", path=sorted(unknown)[0])
        t = msg.get("t")
        if not isinstance(t, (int, float)) or t < 0:
            return _err("cmd needs a numeric timestamp 't' >= 0", path="t")
        if t < self._last_cmd_t:
            return None                      # stale: older than current
        try:
            cmd = TeleopCommand(mode=msg.get("mode"), vx=msg.get("vx"),
                                preset=msg.get("preset"),
                                pose=msg.get("pose"), t=float(t))
            warning = self.synth.set_command(cmd)
        except SynthError as e:
            path = msg.get("mode") if msg.get("mode") in MODES else "mode"
            return _err(str(e), path=str(path))
        self._last_cmd_t = float(t)
        if warning:
            return {"type": "warning", "message": warning}
        return None

    # -- control loop -------------------------------------------------------

    def _seed(self, frame):
        self._qpos = np.concatenate([frame.root_pos, [frame.root_pitch],
                                     frame.joint_pos])[None]
        self._qvel = np.concatenate([frame.root_lin_vel,
                                     [frame.root_ang_vel],
                                     frame.joint_vel])[None]
        self._anchors = np.full((1, self.model.n_contact_points), np.nan)
        self._prev_action = np.zeros((1, self.model.n_joints))
        self._link_force = static_link_forces(
            self.model, self.cfg, self._qpos, self._qvel,
            self._mu_s, self._mu_d, self._e_rest)

    def step(self) -> dict:
        """Advance synthesizer -> filter -> tracker one control period and
        return the state frame for this step."""
        model = self.model
        filtered = self.filter.step(self.synth.tick())
        if self._qpos is None:
            self._seed(filtered)

        window = hold_window(model, filtered, Stage.GMT)[None]
        obs = build_obs(model, Stage.GMT, self._qpos, self._qvel,
                        self._prev_action, window)
        action, _, _ = act(self.gmt, obs, deterministic=True)
        prev = self._prev_action
        qpos, qvel, anchors, contact, diverged = batch_control_step(
            model, self.cfg, self._qpos, self._qvel, action,
            self._mu_s, self._mu_d, self._e_rest, self._com_off,
            self._anchors)

        ref_qpos = np.concatenate([filtered.root_pos, [filtered.root_pitch],
                                   filtered.joint_pos])[None]
        ref_qvel = np.concatenate([filtered.root_lin_vel,
                                   [filtered.root_ang_vel],
                                   filtered.joint_vel])[None]
        failed = bool(diverged[0])
        if not failed:
            pos, ang, vel, angvel = link_kinematics(model, qpos, qvel)
            rpos, rang, rvel, rangvel = link_kinematics(model, ref_qpos,
                                                        ref_qvel)
            failed = bool(check_termination(pos[:, model.tracked_idx],
                                            rpos[:, model.tracked_idx],
                                            Stage.GMT)[0])
        if failed:
            # tracking lost: re-seed the deployment sim on the physical
            # command and keep serving
            self.tracker_faults += 1
            self._seed(filtered)
            pos, ang, vel, angvel = link_kinematics(model, self._qpos,
                                                    self._qvel)
            rpos, rang, rvel, rangvel = link_kinematics(model, ref_qpos,
                                                        ref_qvel)
        else:
            self._qpos, self._qvel, self._anchors = qpos, qvel, anchors
            self._prev_action = action
            self._link_force = link_force_magnitudes(model,
                                                     contact["forces"])

        tracked = model.tracked_idx
        non_ee = [i for i in range(model.n_links) if i not in set(model.ee_idx)]
        _, weighted, total = reward_terms(
            self.reward_cfg, Stage.GMT,
            body_pos=pos[:, tracked], body_angle=ang[:, tracked],
            body_lin_vel=vel[:, tracked], body_ang_vel=angvel[:, tracked],
            ref_body_pos=rpos[:, tracked], ref_body_angle=rang[:, tracked],
            ref_body_lin_vel=rvel[:, tracked], ref_body_ang_vel=rangvel[:, tracked],
            root=self._qpos[:, :3], ref_root=ref_qpos[:, :3],
            ee_force=self._link_force[:, model.ee_idx],
            ref_contact_mask=filtered.contacts[None],
            undesired_count=(self._link_force[:, non_ee]
                             > self.contact_threshold).sum(axis=-1),
            action=action, prev_action=prev,
            q=self._qpos[:, 3:], joint_lo=model.joint_limits[:, 0],
            joint_hi=model.joint_limits[:, 1], dq_ref=ref_qvel[:, 3:])

        self.t += self.cfg.control_dt
        reward = {k: round(float(v[0]), 4) for k, v in weighted.items()}
        reward["total"] = round(float(total[0]), 4)
        return {
            "type": "state",
            "t": round(self.t, 6),
            "root": {"x": float(self._qpos[0, 0]),
                     "z": float(self._qpos[0, 1]),
                     "pitch": float(self._qpos[0, 2])},
            "q": [float(v) for v in self._qpos[0, 3:]],
            "contacts": [bool(f > self.contact_threshold)
                         for f in self._link_force[0, model.ee_idx]],
            "reward": reward,
            "overruns": self.overruns,
            "faults": {"filter": self.filter.faults,
                       "tracker": self.tracker_faults},
        }


# ---------------------------------------------------------------------------
# websocket layer
# ---------------------------------------------------------------------------

class Outbox:
    """Outbound frames with two priorities.

    Replies (pong/warning/error) are never dropped; state frames overwrite
    the oldest pending one (live telemetry beats complete telemetry, and a
    slow client must not stall the control loop).
    """

    def __init__(self, state_depth: int = 4):
        self.replies: deque[str] = deque()
        self.states: deque[str] = deque(maxlen=state_depth)
        self._wakeup = asyncio.Event()

    def put_reply(self, item: str) -> None:
        self.replies.append(item)
        self._wakeup.set()

    def put_state(self, item: str) -> None:
        self.states.append(item)
        self._wakeup.set()

    async def drain(self) -> list[str]:
        while not (self.replies or self.states):
            self._wakeup.clear()
            await self._wakeup.wait()
        out = list(self.replies) + list(self.states)
        self.replies.clear()
        self.states.clear()
        return out


class TeleopServer:
    """Session factory plus the per-connection task wiring."""

    def __init__(self, pmg: Checkpoint | str | Path,
                 gmt: Checkpoint | str | Path, *,
                 decimation: int = 2, turbo: bool = False,
                 vx_max: float = 1.0):
        if not isinstance(pmg, Checkpoint):
            pmg = load_checkpoint(pmg)
        if not isinstance(gmt, Checkpoint):
            gmt = load_checkpoint(gmt)
        if decimation < 1:
            raise TeleopError("decimation must be >= 1")
        self.pmg, self.gmt = pmg, gmt
        self.decimation = int(decimation)
        self.turbo = turbo
        self.vx_max = float(vx_max)
        TeleopSession(pmg, gmt, vx_max=vx_max)   # fail fast on bad pairs

    def make_session(self) -> TeleopSession:
        return TeleopSession(self.pmg, self.gmt, vx_max=self.vx_max)

    async def handle(self, websocket) -> None:
        session = self.make_session()
        out = Outbox()
        await websocket.send(json.dumps(session.hello()))

        async def sender():
            while True:
                for item in await out.drain():
                    await websocket.send(item)

        async def receiver():
            async for raw in websocket:
                reply = session.handle_message(raw)
                if reply is not None:
                    out.put_reply(json.dumps(reply))

        async def control():
            loop = asyncio.get_running_loop()
            period = session.cfg.control_dt
            deadline = loop.time() + period
            k = 0
            while True:
                state = session.step()
                if k % self.decimation == 0:
                    out.put_state(json.dumps(state))
                k += 1
                if self.turbo:
                    await asyncio.sleep(0)
                    continue
                now = loop.time()
                if now > deadline:
                    session.overruns += 1
                    deadline = now          # resync instead of spiraling
                await asyncio.sleep(max(0.0, deadline - now))
                deadline += period

        tasks = [asyncio.create_task(c()) for c in (sender, receiver,
                                                    control)]
        try:
            done, _ = await asyncio.wait(tasks,
                                         return_when=asyncio.FIRST_COMPLETED)
            for d in done:                  # surface real crashes
                if not d.cancelled() and d.exception() is not None:
                    exc = d.exception()
                    if not _is_disconnect(exc):
                        raise exc
        finally:
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)


def _is_disconnect(exc: BaseException) -> bool:
    import websockets
    return isinstance(exc, (websockets.exceptions.ConnectionClosed,
                            ConnectionError))


async def serve_async(host: str, port: int, *, pmg_path, gmt_path,
                      turbo: bool = False, ready: asyncio.Event | None = None,
                      decimation: int = 2):
    """Run the service until cancelled; ``ready`` fires once listening."""
    import websockets

    server = TeleopServer(pmg_path, gmt_path, turbo=turbo,
                          decimation=decimation)
    async with websockets.serve(server.handle, host, port,
                                max_size=MAX_MESSAGE_BYTES) as ws_server:
        serve_async.bound_port = ws_server.sockets[0].getsockname()[1]
        if ready is not None:
            ready.set()
        await asyncio.Future()


def serve(host: str, port: int, *, pmg_path, gmt_path,
          turbo: bool = False) -> None:
    try:
        asyncio.run(serve_async(host, port, pmg_path=pmg_path,
                                gmt_path=gmt_path, turbo=turbo))
    except KeyboardInterrupt:
        pass

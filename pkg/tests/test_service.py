import json
import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from insertrl.sac import TrainConfig
from insertrl.server import (
    InteractiveSource,
    Session,
    build_app,
    handle_message,
    state_message,
)
from insertrl.sim import EnvConfig, make_task_set


def make_session(**kw):
    tcfg = TrainConfig(hidden=(8, 8), batch_size=32, warmup_steps=0,
                       episode_len_train=60)
    kw.setdefault("updates_enabled", False)  # keep the loop fast for tests
    return Session(tcfg=tcfg, realtime=False, **kw)


def drain_until(ws, pred, limit=4000):
    """Read messages until pred(msg) is true; returns the matching one."""
    for _ in range(limit):
        msg = ws.receive_json()
        if pred(msg):
            return msg
    raise AssertionError("condition never satisfied over the stream")


def test_healthz_and_idle_state():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["ok"] is True
    session.stop()


def test_malformed_json_yields_single_error_and_no_crash():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text("{nope")
            msg = drain_until(ws, lambda m: m["type"] == "error")
            assert "malformed" in msg["message"]
            ws.send_text(json.dumps({"type": "warp_drive"}))
            msg = drain_until(ws, lambda m: m["type"] == "error")
            assert "unknown type" in msg["message"]
            assert session.mode() == "idle"  # untouched
    session.stop()


def test_scripted_client_drives_successful_episode():
    # hold "down" plus a light centering pull: the demo episode must insert
    session = make_session()
    app = build_app(session)
    train, _ = make_task_set()
    task = train[0]
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text(json.dumps({"type": "record_demo",
                                     "task": task.id}))
            drain_until(ws, lambda m: m["type"] == "ack")
            done_seen = False
            for _ in range(600):
                msg = ws.receive_json()
                if msg["type"] != "state":
                    continue
                if msg.get("done"):
                    done_seen = True
                    break
                pose = msg["pose"]
                e_x = pose[0] - task.task_frame.x
                ws.send_text(json.dumps({
                    "type": "intervene",
                    "dx": float(np.clip(-e_x / 0.01, -1, 1)),
                    "dz": -1.0,
                    "dtheta": float(np.clip(-pose[2] / 0.17, -1, 1)),
                }))
            assert done_seen
            ws.send_text(json.dumps({"type": "stop"}))
    session.stop()
    assert session.buffers.human_size > 0  # demo landed in D_H
    assert session.buffers.policy_size == 0


def test_pause_freezes_step_counter():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text(json.dumps({"type": "start", "mode": "training"}))
            drain_until(ws, lambda m: m["type"] == "ack")
            drain_until(ws, lambda m: m["type"] == "state"
                        and m["env_steps"] > 3)
            ws.send_text(json.dumps({"type": "pause"}))
            drain_until(ws, lambda m: m["type"] == "ack"
                        and m["cmd"] == "pause")
            drain_until(ws, lambda m: m["type"] == "state"
                        and m["mode"] == "paused")
            frozen = session.snapshot().env_steps
            time.sleep(0.15)
            assert session.snapshot().env_steps == frozen
            ws.send_text(json.dumps({"type": "resume"}))
            drain_until(ws, lambda m: m["type"] == "ack"
                        and m["cmd"] == "resume")
            drain_until(ws, lambda m: m["type"] == "state"
                        and m["env_steps"] > frozen)
            ws.send_text(json.dumps({"type": "stop"}))
    session.stop()


def test_state_stream_monotone():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text(json.dumps({"type": "start"}))
            versions, keys = [], []
            for _ in range(80):
                msg = ws.receive_json()
                if msg["type"] != "state":
                    continue
                versions.append(msg["version"])
                keys.append((msg["episode"], msg["step"]))
                if len(versions) >= 30:
                    break
            ws.send_text(json.dumps({"type": "stop"}))
    session.stop()
    assert versions == sorted(versions)
    assert all(a <= b for a, b in zip(keys, keys[1:]))  # (episode, step)


def test_intervene_messages_tag_transitions_human():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text(json.dumps({"type": "start", "mode": "training"}))
            drain_until(ws, lambda m: m["type"] == "ack")
            for _ in range(40):
                ws.send_text(json.dumps({"type": "intervene", "dz": -1.0}))
                drain_until(ws, lambda m: m["type"] == "state")
            ws.send_text(json.dumps({"type": "stop"}))
    session.stop()
    assert session.buffers.human_size > 0


def test_one_shot_command_cell():
    src = InteractiveSource()
    assert src.take() is None
    src.submit(0.1, -1.0, 0.0)
    first = src.take()
    assert first is not None and first[1] == -1.0
    assert src.take() is None  # consumed; stale commands never replay
    src.submit(0.0, 0.5, 0.0)
    src.submit(0.0, -0.5, 0.0)  # last writer wins
    assert src.take()[1] == -0.5


def test_handle_message_start_validates_task():
    session = make_session()
    reply = handle_message(session, json.dumps(
        {"type": "start", "task": "no_such_task"}))
    assert reply["type"] == "error"
    assert session.mode() == "idle"
    session.stop()


def test_second_client_rejected():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws1:
            ws1.send_text(json.dumps({"type": "start"}))
            drain_until(ws1, lambda m: m["type"] == "ack")
            with client.websocket_connect("/session") as ws2:
                msg = ws2.receive_json()
                assert msg["type"] == "error"
            ws1.send_text(json.dumps({"type": "stop"}))
    session.stop()


def test_state_message_contains_image_payload():
    session = make_session()
    app = build_app(session)
    with TestClient(app) as client:
        with client.websocket_connect("/session") as ws:
            ws.send_text(json.dumps({"type": "start"}))
            msg = drain_until(ws, lambda m: m["type"] == "state"
                              and m["image_pgm_b64"])
            import base64
            blob = base64.b64decode(msg["image_pgm_b64"])
            assert blob.startswith(b"P5 32 32 255\n")
            ws.send_text(json.dumps({"type": "stop"}))
    session.stop()

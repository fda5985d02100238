import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from spaceground import pngio
from spaceground.errors import DimensionMismatchError, RetryExhaustedError
from spaceground.objects import DETECTOR_QUERY, ObjectMaskSet, detect_objects, joint_mask, load_masks
from spaceground.transport import RecordingTransport, RequestsTransport, RetryPolicy

from conftest import make_rgb


def disk_mask(w, h, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


# ---------------------------------------------------------------------------
# file ingestion
# ---------------------------------------------------------------------------

def test_instance_png_partition(tmp_path):
    labels = np.zeros((20, 30), dtype=np.int64)
    labels[2:6, 2:6] = 1
    labels[10:14, 5:9] = 2
    labels[4:9, 20:26] = 3
    path = tmp_path / "instances.png"
    path.write_bytes(pngio.encode_labels_png(labels))
    s = load_masks(path)
    assert len(s) == 3
    assert s.names == ["1", "2", "3"]
    for i, mask in enumerate(s.masks, start=1):
        assert (mask == (labels == i)).all()


def test_all_zero_instance_png(tmp_path):
    path = tmp_path / "instances.png"
    path.write_bytes(pngio.encode_labels_png(np.zeros((8, 8), dtype=np.int64)))
    assert len(load_masks(path)) == 0


def test_mask_directory_ordering_and_overlap(tmp_path):
    d = tmp_path / "masks"
    d.mkdir()
    a = disk_mask(16, 16, 5, 5, 3)
    b = disk_mask(16, 16, 7, 7, 3)  # overlaps a
    (d / "b_second.png").write_bytes(pngio.encode_mask_png(b))
    (d / "a_first.png").write_bytes(pngio.encode_mask_png(a))
    s = load_masks(d)
    assert s.names == ["a_first", "b_second"]  # lexicographic, not creation order
    assert (s.masks[0] == a).all() and (s.masks[1] == b).all()
    assert np.logical_and(a, b).any()  # stacked objects accepted


def test_load_masks_stable_across_runs(tmp_path):
    d = tmp_path / "masks"
    d.mkdir()
    for name in ["x.png", "m.png", "a.png"]:
        (d / name).write_bytes(pngio.encode_mask_png(disk_mask(8, 8, 4, 4, 2)))
    assert load_masks(d).names == load_masks(d).names == ["a", "m", "x"]


# ---------------------------------------------------------------------------
# joint mask
# ---------------------------------------------------------------------------

def test_joint_mask_empty_scene():
    s = ObjectMaskSet(masks=[])
    assert joint_mask(s, 12, 9).sum() == 0
    assert joint_mask(s, 12, 9).shape == (9, 12)


def test_joint_mask_disjoint_and_nested():
    a = disk_mask(32, 32, 8, 8, 3)
    b = disk_mask(32, 32, 24, 24, 4)
    s = ObjectMaskSet(masks=[a, b])
    assert joint_mask(s, 32, 32).sum() == a.sum() + b.sum()
    outer = disk_mask(32, 32, 16, 16, 10)
    inner = disk_mask(32, 32, 16, 16, 4)
    nested = ObjectMaskSet(masks=[outer, inner])
    assert (joint_mask(nested, 32, 32) == outer).all()


def test_mask_set_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatchError):
        ObjectMaskSet(masks=[np.zeros((4, 4), bool), np.zeros((5, 5), bool)])


# ---------------------------------------------------------------------------
# detector client
# ---------------------------------------------------------------------------

class ScriptedDetector:
    """Transport returning canned responses (or raising queued exceptions)."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post_json(self, url, payload):
        self.calls.append((url, payload))
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def encode(mask):
    return base64.b64encode(pngio.encode_mask_png(mask)).decode("ascii")


def test_detect_objects_decodes_masks():
    img = make_rgb(24, 16, seed=1)
    m1 = disk_mask(24, 16, 6, 6, 3)
    m2 = disk_mask(24, 16, 18, 9, 4)
    t = ScriptedDetector([{"masks": [encode(m1), encode(m2)], "names": ["cup", "dish"]}])
    s = detect_objects(t, "http://detector/detect", img)
    assert len(s) == 2 and s.source == "detector"
    assert s.names == ["cup", "dish"]
    assert (s.masks[0] == m1).all() and (s.masks[1] == m2).all()
    # fixed open-set query string goes over the wire
    assert t.calls[0][1]["query"] == DETECTOR_QUERY == "object, objects"


def test_detect_objects_empty_scene_ok():
    img = make_rgb(10, 10, seed=2)
    t = ScriptedDetector([{"masks": [], "names": []}])
    assert len(detect_objects(t, "http://detector/detect", img)) == 0


def test_detect_objects_truncated_body_fails_after_retries():
    img = make_rgb(10, 10, seed=3)
    body = encode(disk_mask(10, 10, 5, 5, 2))
    truncated = {"masks": [body[: len(body) // 2]]}
    t = ScriptedDetector([truncated, truncated, truncated])
    with pytest.raises(RetryExhaustedError, match="malformed detector response"):
        detect_objects(t, "http://detector/detect", img, retry=RetryPolicy(attempts=3))
    assert len(t.calls) == 3


def test_detect_objects_does_not_mutate_image():
    img = make_rgb(12, 12, seed=4)
    original = img.copy()
    t = ScriptedDetector([{"masks": [encode(disk_mask(12, 12, 6, 6, 2))]}])
    detect_objects(t, "http://detector/detect", img)
    assert (img == original).all()


def test_detect_objects_against_live_mock_server():
    """End-to-end over a real localhost HTTP round trip."""
    img = make_rgb(20, 14, seed=5)
    mask = disk_mask(20, 14, 10, 7, 4)

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            assert body["query"] == "object, objects"
            reply = json.dumps({"masks": [encode(mask)], "names": ["box"]}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(reply)))
            self.end_headers()
            self.wfile.write(reply)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/detect"
        s = detect_objects(RequestsTransport(timeout=5), url, img)
        assert len(s) == 1 and s.names == ["box"]
        assert (s.masks[0] == mask).all()
    finally:
        server.shutdown()
        thread.join(timeout=5)


def test_recording_transport_blocks_network():
    t = RecordingTransport()
    with pytest.raises(RetryExhaustedError):
        detect_objects(t, "http://detector/detect", make_rgb(8, 8, seed=6))
    assert len(t.calls) == 3  # every retry was recorded, none escaped

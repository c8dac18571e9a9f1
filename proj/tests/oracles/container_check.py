# Copyright 2026 The fadeq Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Cross-language check of the FADETNSR container and graph schema.

Runs `fadeq synth`, decodes the stores with struct + zlib only, checks the
layout and CRC, re-encodes them here and requires byte equality. Also writes
a store and graph from Python and runs `fadeq quantize` on them.

usage: container_check.py <fadeq executable> <scratch dir>
"""
import json
import os
import struct
import subprocess
import sys
import zlib

MAGIC = b"FADETNSR"
META = "__metadata__"


def decode(data):
    assert data[:8] == MAGIC, "bad magic"
    version, count = struct.unpack_from("<II", data, 8)
    assert version == 1, version
    pos = 16
    headers = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        dtype, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        dims = list(struct.unpack_from("<%dQ" % rank, data, pos))
        pos += 8 * rank
        (offset,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        headers.append((name, dtype, dims, offset))
    payload = data[pos:-4]
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    assert crc == zlib.crc32(payload), "crc"
    tensors, meta, expected = {}, {}, 0
    for name, dtype, dims, offset in headers:
        assert offset == expected, (name, offset, expected)
        count = 1
        for d in dims:
            count *= d
        raw = payload[offset:offset + 4 * count]
        expected += 4 * count
        if name == META:
            meta = json.loads(raw.decode("utf-8"))
        else:
            values = struct.unpack("<%d%s" % (count, "f" if dtype == 0 else "i"), raw)
            tensors[name] = (dtype, dims, values)
    assert expected == len(payload)
    return tensors, meta


def encode(tensors, meta):
    items = sorted(tensors.items())
    if meta:
        text = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        text += b" " * (-len(text) % 4)
        items.append((META, (1, [len(text) // 4], None, text)))
    header = bytearray(MAGIC + struct.pack("<II", 1, len(items)))
    payload = bytearray()
    for name, t in items:
        dtype, dims, values = t[0], t[1], t[2]
        raw = t[3] if len(t) > 3 else struct.pack("<%d%s" % (len(values), "f" if dtype == 0 else "i"), *values)
        encoded = name.encode("utf-8")
        header += struct.pack("<H", len(encoded)) + encoded + struct.pack("<BB", dtype, len(dims))
        header += struct.pack("<%dQ" % len(dims), *dims) + struct.pack("<Q", len(payload))
        payload += raw
    return bytes(header + payload + struct.pack("<I", zlib.crc32(payload)))


def read(path):
    with open(path, "rb") as f:
        return f.read()


def main():
    exe, scratch = sys.argv[1], sys.argv[2]
    os.makedirs(scratch, exist_ok=True)
    p = lambda name: os.path.join(scratch, name)

    subprocess.run([exe, "synth", "--layers", "3", "--seed", "5", "--dist", "outlier",
                    "--out-weights", p("w.bin"), "--out-calib", p("c.bin"), "--out-graph", p("g.json")], check=True)
    for name in ("w.bin", "c.bin"):
        data = read(p(name))
        tensors, meta = decode(data)
        assert meta["seed"] == "5", meta
        assert encode(tensors, meta) == data, "re-encoding %s differs" % name
    graph = json.load(open(p("g.json")))
    linears = [n for n in graph["nodes"] if n["kind"] == "linear"]
    tensors, _ = decode(read(p("w.bin")))
    for n in linears:
        assert tensors[n["weight"]][1] == n["shape"], n
    print("synth stores decode and re-encode byte-identically")

    # a single captured layer, as an exporter would write it
    d_out, d_in, samples = 4, 6, 10
    w = [((i * 7 + 3) % 11 - 5) / 4.0 for i in range(d_out * d_in)]
    x = [((i * 5 + 1) % 13 - 6) / 3.0 for i in range(d_in * samples)]
    with open(p("layer.bin"), "wb") as f:
        f.write(encode({"blk.fc": (0, [d_out, d_in], w)}, {"model_id": "toy"}))
    with open(p("acts.bin"), "wb") as f:
        f.write(encode({"blk.fc.in": (0, [d_in, samples], x)}, {}))
    with open(p("layer.json"), "w") as f:
        json.dump({"slots": {"blk.fc.in": d_in},
                   "nodes": [{"name": "blk.fc", "kind": "linear", "inputs": ["blk.fc.in"],
                              "shape": [d_out, d_in], "group_size": 3}]}, f)
    subprocess.run([exe, "quantize", "--graph", p("layer.json"), "--weights", p("layer.bin"),
                    "--calib", p("acts.bin"), "--method", "fade", "--bits", "4",
                    "--out", p("q.bin"), "--report", p("q.json")], check=True)
    out, meta = decode(read(p("q.bin")))
    assert out["blk.fc.codes"][0] == 1 and out["blk.fc.codes"][1] == [d_out, d_in]
    assert out["blk.fc.scales"][1] == [d_out, 2]
    assert meta["blk.fc.group_size"] == "3"
    codes, scales, values = out["blk.fc.codes"][2], out["blk.fc.scales"][2], out["blk.fc"][2]
    for r in range(d_out):
        for c in range(d_in):
            q = codes[r * d_in + c]
            assert -8 <= q <= 7
            s = struct.unpack("<f", struct.pack("<f", scales[r * 2 + c // 3] * 1.0))[0]
            assert abs(values[r * d_in + c] - q * s) <= 1e-6 * max(1.0, abs(q * s))
    report = json.load(open(p("q.json")))
    assert len(report["layers"]) == 1 and report["layers"][0]["diagnostics"] is not None
    print("python-written layer quantizes; codes, scales and values agree")


if __name__ == "__main__":
    main()

"""Regenerate the golden vectors in ``vectors/`` from independent references.

NAS vectors are hand-encoded byte strings (field by field, no codec call).
MAC and keystream vectors come from pycryptodome, not from the simulator's
``cryptography`` backend.  Run from the repository root:

    python3 scripts/gen_vectors.py
"""

from pathlib import Path

import numpy as np
from Crypto.Cipher import AES
from Crypto.Hash import CMAC

OUT = Path(__file__).resolve().parent.parent / "vectors"

ZERO_KEY = bytes(16)
ZERO_CHALLENGE = bytes(8)
# wire id: type nibble + 12-bit owner in two bytes, then the 12-byte part.
# "zero id" is the smallest valid one: type 1, owner 0, zero device part
ZERO_ID = bytes([0x10, 0x00]) + bytes(12)
KEY = bytes(range(16))
CHALLENGE = bytes.fromhex("0011223344556677")
DEV_ID = bytes([0x21, 0x23]) + bytes.fromhex("A1B2C3D4E5F60718293A4B5C")


def cmac_tag(key, challenge, dev_id, counter):
    mac = CMAC.new(key, ciphermod=AES)
    mac.update(challenge + dev_id + counter.to_bytes(4, "big"))
    return mac.digest()[:4]


def keystream(key, challenge, counter, direction, n):
    iv = challenge + counter.to_bytes(4, "big") + bytes([direction]) + bytes(3)
    return AES.new(key, AES.MODE_CTR, initial_value=iv, nonce=b"").encrypt(bytes(n))


def nas_vectors():
    hdr = lambda kind, task, flags: bytes([kind]) + task.to_bytes(4, "big") + bytes([flags])
    dev = DEV_ID
    return {
        # kind=1, task 1, no flags, prefix_bits 0, no challenge
        "inventory_request_empty": hdr(1, 1, 0) + b"\x00" + b"\x00",
        # 12-bit prefix A1B -> 2 prefix bytes, challenge present, AUTH
        "inventory_request_prefix_auth": hdr(1, 7, 1) + bytes([12]) + bytes.fromhex("A1B0") + b"\x01" + CHALLENGE,
        # owner filter: bit 7 set on prefix_bits, owner header after prefix bytes
        "inventory_request_owner": hdr(1, 2, 0) + bytes([0x80 | 8]) + b"\xA1" + bytes([0x21, 0x23]) + b"\x00",
        "inventory_response_clear": hdr(2, 1, 0) + dev + (1).to_bytes(4, "big") + b"\x00",
        "inventory_response_auth": hdr(2, 0x01020304, 5) + dev + (9).to_bytes(4, "big") + b"\x01" + bytes.fromhex("DEADBEEF"),
        # op Write(2), address 0x10, 3-byte payload, no challenge
        "command_request_write": hdr(3, 3, 0) + dev + bytes([2, 0x10, 3]) + b"abc" + b"\x00",
        # op Read(1), status Ok(0), 2-byte payload, counter 4, no tag
        "command_response_read": hdr(4, 3, 0) + dev + bytes([1, 0, 2]) + b"\x12\x34" + (4).to_bytes(4, "big") + b"\x00",
    }


def main():
    OUT.mkdir(exist_ok=True)
    lines = ["# name hex (hand-encoded NAS PDUs)"]
    lines += [f"{name} {data.hex().upper()}" for name, data in nas_vectors().items()]
    (OUT / "nas_golden.txt").write_text("\n".join(lines) + "\n")

    sec = ["# name hex (pycryptodome AES-CMAC / AES-CTR)"]
    sec.append(f"mac_t0 {cmac_tag(ZERO_KEY, ZERO_CHALLENGE, ZERO_ID, 0).hex().upper()}")
    sec.append(f"mac_k1 {cmac_tag(KEY, CHALLENGE, DEV_ID, 7).hex().upper()}")
    sec.append(f"keystream_r2d {keystream(KEY, CHALLENGE, 0, 0, 35).hex().upper()}")
    sec.append(f"keystream_d2r {keystream(KEY, CHALLENGE, 7, 1, 35).hex().upper()}")
    # seed 42, challenge substream (purpose 0) of task 1
    nonce = np.random.default_rng(np.random.SeedSequence(42, spawn_key=(0, 1))).bytes(8)
    sec.append(f"challenge_seed42_task1 {nonce.hex().upper()}")
    (OUT / "security.txt").write_text("\n".join(sec) + "\n")


if __name__ == "__main__":
    main()

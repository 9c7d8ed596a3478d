"""Passive agent used by the harness tests: walks the trajectory, submits an empty map."""
import json
import os
import socket
import struct
import sys


def call(sock, endpoint, body):
    payload = json.dumps({"version": 1, "endpoint": endpoint, "body": body}).encode()
    sock.sendall(struct.pack(">I", len(payload)) + payload)
    header = sock.recv(4, socket.MSG_WAITALL)
    (length,) = struct.unpack(">I", header)
    data = b""
    while len(data) < length:
        data += sock.recv(length - len(data))
    return json.loads(data)


def main():
    host, port = os.environ["OMQKIT_ADDR"].rsplit(":", 1)
    episode = os.environ["OMQKIT_EPISODE"]
    task = os.environ["OMQKIT_TASK"]
    envs = os.environ["OMQKIT_ENVIRONMENTS"].split(",")
    with socket.create_connection((host, int(port))) as sock:
        if os.environ["OMQKIT_DIFFICULTY"] == "passive_gt":
            while call(sock, "step", {"episode": episode, "action": {"kind": "move_next"}})["status"] == "ok":
                pass
        mapdoc = {"version": 1, "task": task, "environment": envs[0], "objects": []}
        reply = call(sock, "submit", {"episode": episode, "map": mapdoc})
        if reply["status"] != "ok":
            print(reply, file=sys.stderr)
            sys.exit(1)


if __name__ == "__main__":
    main()

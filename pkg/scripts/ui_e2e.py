"""Drive the frontend end-to-end suite against a live mock-backend service.

Builds a small workspace (cohort, tokenizer, baselines), starts the chat
service on a free port, then runs `npm run test:e2e` in frontend/ with
BIOMECH_API_BASE pointing at it. Requires `npm install` and `npm run build`
in frontend/ first.

Usage: python scripts/ui_e2e.py [--workspace DIR] [--keep]
"""

from __future__ import annotations

import argparse
import os
import socket
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import httpx

REPO = Path(__file__).resolve().parent.parent


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def build_workspace(root: Path) -> None:
    from biomech import pipeline

    ws = pipeline.Workspace(root=root)
    if (ws.baselines_dir / "summary.json").exists():
        print(f"reusing workspace {root}", file=sys.stderr)
        return
    print(f"building workspace {root} (a few minutes)...", file=sys.stderr)
    pipeline.run_synth(ws, seed=11, participants=14, trials_per_participant=8)
    pipeline.run_train_tokenizer(ws, seed=11, profile="desk", train_steps=250)
    pipeline.run_tokenize(ws)
    pipeline.run_build_dataset(ws, seed=11)
    pipeline.run_train_baselines(ws, seed=11, search_iters=2)


def wait_healthy(base: str, timeout_s: float = 30.0) -> None:
    deadline = time.time() + timeout_s
    while time.time() < deadline:
        try:
            if httpx.get(base + "/healthz", timeout=2.0).status_code == 200:
                return
        except httpx.TransportError:
            pass
        time.sleep(0.3)
    raise RuntimeError(f"service at {base} did not become healthy")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--workspace", default=None,
                        help="reuse/create this workspace instead of a temp dir")
    parser.add_argument("--keep", action="store_true", help="keep the temp workspace")
    args = parser.parse_args()

    root = Path(args.workspace) if args.workspace else Path(tempfile.mkdtemp(prefix="ui_e2e_"))
    build_workspace(root)

    port = free_port()
    base = f"http://127.0.0.1:{port}"
    server = subprocess.Popen(
        [sys.executable, "-m", "biomech.cli", "serve", "--workspace", str(root),
         "--port", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        wait_healthy(base)
        print(f"service healthy at {base}; running vitest e2e", file=sys.stderr)
        env = dict(os.environ, BIOMECH_API_BASE=base)
        result = subprocess.run(["npm", "run", "test:e2e"], cwd=REPO / "frontend", env=env)
        return result.returncode
    finally:
        server.terminate()
        server.wait(timeout=10)
        if not args.workspace and not args.keep:
            import shutil

            shutil.rmtree(root, ignore_errors=True)


if __name__ == "__main__":
    sys.exit(main())

"""Serve the stub model backend for local development.

The stub implements the remote wire protocol (POST /v1/select,
/v1/extract, /v1/complete, /v1/generate) on top of the deterministic
baseline heuristics, so the session service and CLI can be exercised
in remote mode without any real model endpoint:

    python3 scripts/run_stub_backend.py --port 8701
    hragent serve --schema-dir schemas --backend-url http://127.0.0.1:8701
"""

import argparse

import uvicorn

from hragent.stub_server import make_stub_app


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8701)
    parser.add_argument("--delay-ms", type=float, default=0.0,
                        help="Artificial per-request latency for bench runs.")
    args = parser.parse_args()
    app = make_stub_app(delay_s=args.delay_ms / 1000.0)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()

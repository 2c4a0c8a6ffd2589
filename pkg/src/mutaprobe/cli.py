"""Command line entry point: a thin client over the pipeline service.

Commands post their resolved configuration to the service API. By default
the app runs in process over an ASGI transport (no socket, single-process
semantics); --server targets a running instance instead, and `serve`
starts one. Exit codes: 0 ok, 2 validation, 3 missing input, 4 endpoint
failure, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

from . import __version__
from .config import load_config
from .errors import MutaprobeError
from .pipeline import COMMANDS

EXIT_BY_CLASS = {
    "validation": 2,
    "missing_input": 3,
    "endpoint": 4,
    "internal": 5,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mutaprobe",
        description="prompt-mutation harness: generation campaigns, flip analysis, probes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in COMMANDS.items():
        cp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        cp.add_argument("--config", help="JSON config file")
        cp.add_argument("--paper-preset", action="store_true", help="pin every knob to the reference values")
        cp.add_argument("--seed", type=int, help="run seed override")
        cp.add_argument("--tau", type=int, action="append", dest="taus", help="flip threshold (repeatable)")
        cp.add_argument("--endpoint", help="completion endpoint for every model in the roster")
        cp.add_argument("--timeout-s", type=float, dest="timeout_s", help="completion request timeout")
        cp.add_argument("--corpus", help="corpus path override")
        cp.add_argument("--outdir", help="output directory override")
        cp.add_argument("--activations", help="activation store override (path or synthetic[:L[:D]])")
        cp.add_argument("--grouping", help="CWE grouping file override")
        cp.add_argument("--server", help="URL of a running service (default: in-process)")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8351)
    return parser


class AsgiBridgeTransport(httpx.BaseTransport):
    """Synchronous transport into an ASGI app, one event loop per request.

    Lets the CLI speak real HTTP semantics to the in-process service with
    no socket: routing, validation, and error mapping behave exactly as
    they would against a running server.
    """

    def __init__(self, app):
        self._inner = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        import asyncio

        async def roundtrip() -> httpx.Response:
            response = await self._inner.handle_async_request(request)
            body = await response.aread()
            return httpx.Response(
                response.status_code, headers=response.headers, content=body, request=request
            )

        return asyncio.run(roundtrip())


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service.app import create_app

    transport = AsgiBridgeTransport(create_app())
    return httpx.Client(transport=transport, base_url="http://mutaprobe.internal", timeout=None)


def _run_command(args: argparse.Namespace) -> int:
    overrides = {
        "seed": args.seed,
        "taus": args.taus,
        "endpoint": args.endpoint,
        "timeout_s": args.timeout_s,
        "corpus": args.corpus,
        "outdir": args.outdir,
        "activations": args.activations,
        "grouping": args.grouping,
    }
    config = load_config(args.config, paper_preset=args.paper_preset, overrides=overrides)
    with _client(args.server) as client:
        try:
            resp = client.post(f"/v1/commands/{args.command}", json={"config": config.to_dict()})
        except httpx.TransportError as e:
            print(f"error [endpoint]: cannot reach service: {e}", file=sys.stderr)
            return EXIT_BY_CLASS["endpoint"]
    if resp.status_code == 200:
        body = resp.json()
        print(json.dumps(body["summary"], ensure_ascii=False, sort_keys=True, indent=1))
        return 0
    try:
        err = resp.json()
        error_class, detail = err["error_class"], err["detail"]
    except Exception:
        error_class, detail = "internal", resp.text[:500]
    print(f"error [{error_class}]: {detail}", file=sys.stderr)
    return EXIT_BY_CLASS.get(error_class, 5)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    try:
        return _run_command(args)
    except MutaprobeError as e:
        # config assembly runs client-side and can fail before any request
        print(f"error [{e.error_class}]: {e}", file=sys.stderr)
        return EXIT_BY_CLASS.get(e.error_class, 5)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Exit codes: 0 success, 1 validation or verification failure, 2 transport
failure, 3 backend failure. Secrets never travel on the command line: key
material lives in a keyring file named by ``TCME_KEY_FILE`` and the remote
API token in ``TCME_API_TOKEN``.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from dataclasses import dataclass
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

from . import canonical, templates
from .backends import PROVIDERS, TOKEN_ENV, BackendError, OracleBackend, RemoteBackend, ScriptedBackend
from .constraints import ConstraintError, GrammarError
from .manifest import (
    ApprovalError,
    ManifestError,
    PartyApproval,
    approve,
    canonical_encode,
    decode,
    digest,
    verify_approval,
)

EXIT_OK, EXIT_VALIDATION, EXIT_TRANSPORT, EXIT_BACKEND = 0, 1, 2, 3
KEY_FILE_ENV = "TCME_KEY_FILE"


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


# -- keyring ------------------------------------------------------------------


@dataclass
class PartyKeys:
    psk: bytes
    public_key: bytes
    signing_key: Ed25519PrivateKey | None = None


def _key_file(required: bool = True) -> Path | None:
    path = os.environ.get(KEY_FILE_ENV)
    if not path and required:
        raise CliError(f"environment variable {KEY_FILE_ENV} must name the keyring file")
    return Path(path) if path else None


def load_keyring(path: Path | None = None) -> dict[str, PartyKeys]:
    """Keyring JSON: {"parties": {id: {"psk": hex, "public_key": hex, "signing_key": hex?}}}."""
    path = path or _key_file()
    try:
        data = json.loads(Path(path).read_text())
        out = {}
        for pid, entry in data["parties"].items():
            sk = entry.get("signing_key")
            out[pid] = PartyKeys(
                bytes.fromhex(entry["psk"]),
                bytes.fromhex(entry["public_key"]),
                Ed25519PrivateKey.from_private_bytes(bytes.fromhex(sk)) if sk else None,
            )
        return out
    except OSError as exc:
        raise CliError(f"cannot read keyring {path}: {exc.strerror}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(f"malformed keyring {path}: {exc}") from None


def _raw(key) -> bytes:
    from cryptography.hazmat.primitives import serialization

    if isinstance(key, Ed25519PrivateKey):
        return key.private_bytes(
            serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
        )
    return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def make_keyring(party_ids) -> dict:
    parties = {}
    for pid in party_ids:
        sk = Ed25519PrivateKey.generate()
        parties[pid] = {
            "psk": secrets.token_bytes(32).hex(),
            "public_key": _raw(sk.public_key()).hex(),
            "signing_key": _raw(sk).hex(),
        }
    return {"parties": parties}


# -- file helpers ---------------------------------------------------------------


def _read_manifest(path):
    try:
        return decode(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc.strerror}") from None
    except (ManifestError, ConstraintError, GrammarError, ValueError) as exc:
        raise CliError(f"invalid manifest {path}: {exc}") from None


def _read_approval(path) -> PartyApproval:
    try:
        return PartyApproval.decode(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read approval {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise CliError(f"malformed approval {path}: {exc}") from None


def _write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data)
    else:
        path.write_bytes(data)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"--sizes expects comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise CliError("--sizes needs at least one positive integer")
    return sizes


def _parse_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    try:
        lo_i, hi_i = int(lo), int(hi if sep else lo)
    except ValueError:
        raise CliError(f"--n expects LO:HI, got {text!r}") from None
    if not 1 <= lo_i <= hi_i:
        raise CliError(f"--n range must satisfy 1 <= LO <= HI, got {text!r}")
    return lo_i, hi_i


def _remote_backend(args, model: str) -> RemoteBackend:
    if not args.endpoint:
        raise CliError("--endpoint is required for the remote backend", EXIT_BACKEND)
    return RemoteBackend(args.endpoint, args.model or model, provider=args.provider)


def _figure_path(csv_path: str | None, explicit: str | None, suffix: str) -> Path | None:
    if explicit:
        return Path(explicit)
    if csv_path:
        return Path(csv_path).with_name(Path(csv_path).stem + suffix)
    return None


# -- subcommands ------------------------------------------------------------------


def cmd_keygen(args) -> int:
    path = Path(args.output) if args.output else _key_file()
    if path.exists() and not args.force:
        raise CliError(f"{path} exists; pass --force to overwrite")
    parties = [p for p in args.parties.split(",") if p]
    if len(set(parties)) != len(parties) or not parties:
        raise CliError("--parties must list distinct party ids")
    _write(path, json.dumps(make_keyring(parties), indent=2) + "\n")
    os.chmod(path, 0o600)
    print(f"wrote keys for {', '.join(parties)} to {path}")
    return EXIT_OK


def cmd_manifest_new(args) -> int:
    factory = templates.TEMPLATES[args.template]
    kwargs = {"retry_limit": args.retry_limit}
    if args.backend:
        kwargs["backend_kind"] = args.backend
    if args.model_id:
        kwargs["model_id"] = args.model_id
    if args.nonce:
        try:
            nonce = bytes.fromhex(args.nonce)
        except ValueError:
            raise CliError("--nonce must be 32 hex characters") from None
        kwargs["nonce"] = nonce
    if args.template == "age-overlap":
        kwargs["n"] = args.n
    try:
        manifest = factory(**kwargs)
    except (ManifestError, ConstraintError, GrammarError, ValueError) as exc:
        raise CliError(f"cannot build manifest: {exc}") from None
    _write(args.output, canonical_encode(manifest))
    print(digest(manifest).hex())
    return EXIT_OK


def cmd_manifest_digest(args) -> int:
    print(digest(_read_manifest(args.manifest)).hex())
    return EXIT_OK


def cmd_manifest_show(args) -> int:
    m = _read_manifest(args.manifest)
    print(f"digest   {digest(m).hex()}")
    print(f"model    {m.model.model_id} ({m.model.backend_kind})")
    print(f"parties  {', '.join(m.party_ids)}")
    print(f"output   {canonical.dumps(m.output.to_tree()).decode()}")
    print(f"retries  {m.retry_limit}")
    print("prompt:")
    print(m.prompt.template)
    return EXIT_OK


def cmd_manifest_approve(args) -> int:
    manifest = _read_manifest(args.manifest)
    keys = load_keyring().get(args.party)
    if keys is None or keys.signing_key is None:
        raise CliError(f"no signing key for party {args.party!r} in the keyring")
    try:
        approval = approve(manifest, args.party, keys.signing_key)
    except ApprovalError as exc:
        raise CliError(str(exc)) from None
    _write(args.output, approval.encode())
    print(f"{args.party} approved {approval.manifest_digest.hex()}")
    return EXIT_OK


def cmd_manifest_verify(args) -> int:
    manifest = _read_manifest(args.manifest)
    keyring = load_keyring()
    d = digest(manifest)
    ok = {}
    for path in args.approvals:
        approval = _read_approval(path)
        keys = keyring.get(approval.party_id)
        if keys is None or approval.party_id not in manifest.party_ids:
            print(f"{path}: unknown party {approval.party_id!r}", file=sys.stderr)
            continue
        try:
            valid = verify_approval(approval, d, keys.public_key)
        except ApprovalError as exc:
            raise CliError(f"{path}: {exc}") from None
        ok[approval.party_id] = ok.get(approval.party_id, False) or valid
    failed = False
    for pid in manifest.party_ids:
        status = "ok" if ok.get(pid) else ("invalid" if pid in ok else "missing")
        failed |= status != "ok"
        print(f"{pid}: {status}")
    if failed:
        raise CliError("approval check failed")
    return EXIT_OK


def _backend_factory(args):
    def factory(manifest):
        kind = manifest.model.backend_kind
        if kind == "oracle":
            return OracleBackend()
        if kind == "remote":
            return _remote_backend(args, manifest.model.model_id)
        return ScriptedBackend(args.script or [])

    return factory


def cmd_serve(args) -> int:
    from .transport import EnvironmentCore, ListenConfig, SessionRegistry, serve

    try:
        config = ListenConfig.parse(args.listen)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    keyring = load_keyring()
    manifests = [_read_manifest(p) for p in args.manifests]
    factory = _backend_factory(args)
    for m in manifests:
        if m.model.backend_kind == "remote":
            factory(m)  # fail fast on configuration, before accepting parties
    registry = SessionRegistry()
    sids = [registry.register(m) for m in manifests]
    core = EnvironmentCore(
        registry,
        {pid: k.psk for pid, k in keyring.items()},
        {pid: k.public_key for pid, k in keyring.items()},
        factory,
    )
    try:
        endpoint = serve(config, core)
    except OSError as exc:
        raise CliError(f"cannot listen on {args.listen}: {exc.strerror}", EXIT_TRANSPORT) from None
    host, port = endpoint.address
    print(f"listening on {host}:{port}", flush=True)
    try:
        if not endpoint.wait_idle(args.timeout):
            raise CliError("timed out waiting for parties", EXIT_TRANSPORT)
    except KeyboardInterrupt:
        return EXIT_TRANSPORT
    finally:
        endpoint.close()
    code = EXIT_OK
    for sid in sids:
        result = core.results.get(sid)
        if result is None:
            print(f"{sid.hex()}: no result")
            code = max(code, EXIT_TRANSPORT)
        elif result.released:
            print(f"{sid.hex()}: released ({result.rounds_used} invocation(s))")
        else:
            print(f"{sid.hex()}: aborted ({result.reason.value})")
            code = max(code, EXIT_BACKEND if result.reason.value == "BackendFailure" else EXIT_VALIDATION)
    return code


def cmd_join(args) -> int:
    from .transport import PartyClient, TransportError, join

    manifest = _read_manifest(args.manifest)
    if args.party not in manifest.party_ids:
        raise CliError(f"party {args.party!r} is not listed in the manifest")
    if args.value_file:
        try:
            raw = Path(args.value_file).read_text()
        except OSError as exc:
            raise CliError(f"cannot read {args.value_file}: {exc.strerror}") from None
        value = _parse_value(raw) if args.json else raw
    else:
        value = _parse_value(args.value) if args.json else args.value
    try:
        host, _, port = args.connect.rpartition(":")
        port = int(port)
    except ValueError:
        raise CliError(f"expected host:port, got {args.connect!r}") from None
    # validation happens in the client constructor, before anything touches the network
    try:
        keys = load_keyring().get(args.party)
        if keys is None:
            raise CliError(f"no keys for party {args.party!r} in the keyring")
        approval = _read_approval(args.approval)
        client = PartyClient(args.party, keys.psk, manifest, approval, value)
    except ConstraintError as exc:
        raise CliError(f"input rejected locally: {exc}") from None
    try:
        outcome = join(host or "127.0.0.1", port, client, timeout=args.timeout)
    except TransportError as exc:
        raise CliError(str(exc), EXIT_TRANSPORT) from None
    if outcome.kind == "result":
        print(outcome.output)
        return EXIT_OK
    if outcome.kind == "abort":
        print(f"aborted: {outcome.reason}", file=sys.stderr)
        return EXIT_BACKEND if outcome.reason == "BackendFailure" else EXIT_VALIDATION
    print(f"error: {outcome.reason}", file=sys.stderr)
    return EXIT_TRANSPORT


def cmd_bench_gc(args) -> int:
    from .mpc.cost import cost_report, reports_csv, summary

    reports = cost_report(_parse_sizes(args.sizes), with_tcme=not args.no_tcme)
    text = reports_csv(reports)
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)
    print(summary(reports))
    figure = _figure_path(args.csv, args.figure, "_scaling.png")
    if figure is not None and len(reports) >= 2:
        from .plotting import plot_cost_scaling

        print(f"figure: {plot_cost_scaling(reports, figure)}")
    return EXIT_OK


def cmd_exp_coloring(args) -> int:
    from .experiments import run_experiment

    n_range = _parse_range(args.n)
    if not 0.0 <= args.p <= 1.0:
        raise CliError("--p must be in [0, 1]")
    if not 0.0 <= args.balance <= 1.0:
        raise CliError("--balance must be in [0, 1]")
    if args.trials < 1:
        raise CliError("--trials must be positive")
    if args.backend == "remote":
        _remote_backend(args, templates.coloring().model.model_id)  # configuration check up front

        def backend():
            return _remote_backend(args, templates.coloring().model.model_id)

    else:
        backend = OracleBackend()
    result = run_experiment(
        backend,
        trials=args.trials,
        n_range=n_range,
        p=args.p,
        balance=args.balance,
        seed=args.seed,
        workers=args.workers,
        rps=args.rps,
        via_network=args.via_network,
    )
    if args.csv:
        _write(args.csv, result.to_csv())
    print(result.matrix.summary())
    print(f"trials {len(result.records)}  aborted {result.aborted}")
    figure = _figure_path(args.csv, args.figure, "_confusion.png")
    if figure is not None:
        from .plotting import plot_confusion

        print(f"figure: {plot_confusion(result.matrix, figure)}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation failures; exit code 2 is reserved for transport
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add_remote_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", help="remote model API base URL")
    p.add_argument("--model", help="remote model name (defaults to the manifest's model id)")
    p.add_argument("--provider", choices=sorted(PROVIDERS), default="openai")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tcme",
        description="Multi-party model-mediated computation runtime.",
        epilog=f"Secrets come from the environment: {KEY_FILE_ENV} (keyring path), {TOKEN_ENV} (remote API token).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a keyring with pre-shared and signing keys")
    p.add_argument("--parties", required=True, help="comma-separated party ids")
    p.add_argument("-o", "--output", help=f"keyring path (default: ${KEY_FILE_ENV})")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    m = sub.add_parser("manifest", help="manifest lifecycle").add_subparsers(dest="action", required=True)
    p = m.add_parser("new", help="create a manifest from a shipped template")
    p.add_argument("--template", required=True, choices=sorted(templates.TEMPLATES))
    p.add_argument("--backend", choices=["oracle", "remote", "scripted"], help="default depends on the template")
    p.add_argument("--model-id")
    p.add_argument("--nonce", help="16-byte nonce as hex (random when omitted)")
    p.add_argument("--retry-limit", type=int, default=2)
    p.add_argument("--n", type=int, default=5, help="vector length for age-overlap")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_manifest_new)
    p = m.add_parser("digest", help="print the manifest digest as hex")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_manifest_digest)
    p = m.add_parser("show", help="print a readable summary")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_manifest_show)
    p = m.add_parser("approve", help="sign the manifest digest as one party")
    p.add_argument("manifest")
    p.add_argument("--party", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_manifest_approve)
    p = m.add_parser("verify", help="exit 0 iff every party has a valid approval")
    p.add_argument("manifest")
    p.add_argument("approvals", nargs="*")
    p.set_defaults(func=cmd_manifest_verify)

    p = sub.add_parser("serve", help="host the environment until the given sessions finish")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--listen", default="127.0.0.1:7000", help="host:port")
    p.add_argument("--timeout", type=float, default=None, help="give up after this many seconds")
    p.add_argument("--script", action="append", help="queued response for scripted manifests")
    _add_remote_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("join", help="submit one party's input and wait for the result")
    p.add_argument("manifest")
    p.add_argument("--connect", required=True, help="host:port")
    p.add_argument("--party", required=True)
    p.add_argument("--approval", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--value", help="input value (parsed as JSON when possible)")
    src.add_argument("--value-file", help="read the input value from a file")
    p.add_argument("--raw", dest="json", action="store_false", help="treat the value as a plain string")
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_join)

    b = sub.add_parser("bench", help="baseline benchmarks").add_subparsers(dest="bench", required=True)
    p = b.add_parser("gc", help="garbled-circuit cost sweep for the overlap task")
    p.add_argument("--sizes", default="8,32,128,512,1024")
    p.add_argument("--csv")
    p.add_argument("--figure", help="figure path (default: next to the CSV)")
    p.add_argument("--no-tcme", action="store_true", help="skip the simulated TCME session per size")
    p.set_defaults(func=cmd_bench_gc)

    e = sub.add_parser("exp", help="experiments").add_subparsers(dest="experiment", required=True)
    p = e.add_parser("coloring", help="graph 3-coloring verification experiment")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", default="5:25", help="node-count range LO:HI, sampled uniformly")
    p.add_argument("--p", type=float, default=0.1, help="edge probability")
    p.add_argument("--balance", type=float, default=0.5, help="fraction of trials with a valid coloring")
    p.add_argument("--backend", choices=["oracle", "remote"], default="oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--rps", type=float, help="request-per-second cap for remote backends")
    p.add_argument("--via-network", action="store_true", help="run every trial over the simulated network")
    p.add_argument("--csv")
    p.add_argument("--figure", help="figure path (default: next to the CSV)")
    _add_remote_flags(p)
    p.set_defaults(func=cmd_exp_coloring)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"tcme: {exc}", file=sys.stderr)
        return exc.code
    except BackendError as exc:
        print(f"tcme: backend: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())

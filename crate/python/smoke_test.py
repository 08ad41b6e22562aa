"""Smoke test for the wasmfx_py extension.

Build first with
    cargo build -p wasmfx-py --features extension-module
then run
    python3 python/smoke_test.py [path/to/libwasmfx_py.so]
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load(lib):
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / "wasmfx_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("wasmfx_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    lib = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "target" / "debug" / "libwasmfx_py.so"
    fx = load(lib)

    cases = fx.corpus()
    assert len(cases) >= 10, cases
    for name, source, stdout, code in cases:
        for audit in (False, True):
            e = fx.run(source, audit=audit)
            assert (e.stdout, e.exit_code) == (stdout, code), (name, audit, e)
        m = fx.Module.parse(source)
        assert m.validate() == [], name
        assert fx.Module.parse(m.print()) == m, name

    src = dict((c[0], c[1]) for c in cases)["generators/sum_until"]
    e = fx.run(src, invoke="sum_until", args=["101"], check_soundness=True)
    assert e.stdout == "5050\n" and e.exit_code == 0, e

    try:
        fx.Module.parse("(module (func (suspend $nope)))")
    except ValueError as err:
        assert "nope" in str(err) or "tag" in str(err), err
    else:
        raise AssertionError("unknown tag should not parse")

    report = dict(fx.bench(2, 2, 1))
    assert report["suspends"] == "2" and report["cont_news"] == "2", report

    print(f"ok: {len(cases)} corpus cases, benchmark {report['cont_allocs']} allocations")


if __name__ == "__main__":
    main()

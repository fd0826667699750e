#!/usr/bin/env python3
"""Serve a freshly packaged sample-pipeline sciunit for frontend tests.

Usage: serve_fixture.py INFOFILE [UIDIR]

Builds the fixture in a temp directory, starts the API server on an
ephemeral port, writes {"port", "root", "unit"} JSON to INFOFILE, and
serves until terminated.
"""

import json
import sys
import tempfile
from pathlib import Path

from sciunit import corpus
from sciunit.api import ApiServer
from sciunit.auditor import package_recorded
from sciunit.chunkstore import RollingHashParams
from sciunit.container import Sciunit


def main() -> int:
    infofile = Path(sys.argv[1])
    ui_dir = sys.argv[2] if len(sys.argv) > 2 else ""
    workdir = Path(tempfile.mkdtemp(prefix="sciunit-ui-fixture-"))
    params = RollingHashParams(boundary_bits=9, min_chunk=64, max_chunk=4096)
    unit = Sciunit.create(workdir / "units", "pipeline", params)
    tree = corpus.install_tree(workdir / "tree")
    corpus.run_reference(tree)
    package_recorded(unit, corpus.trace_text(), tree, corpus.PIPELINE_DIR,
                     environment=dict(corpus.PIPELINE_ENV))
    server = ApiServer(unit, port=0, ui_dir=ui_dir, backend="portable")
    infofile.write_text(json.dumps({
        "port": server.port,
        "root": str(workdir / "units"),
        "unit": "pipeline",
    }))
    print(f"fixture API on 127.0.0.1:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())

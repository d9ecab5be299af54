"""Quick end-to-end check of the Python bindings."""

import math
import tempfile
from pathlib import Path

import edgecalc

grid = edgecalc.Grid(t_half=8.0, n_t=64, n_sigma=8, n_u=8)
print(grid)

fields = edgecalc.Field.ensemble(grid, seed=1, count=2, t_range=(-1.0, 1.0))
f = fields[0]
assert len(f) == math.prod(grid.shape)
lo = edgecalc.sobolev_norm(f, 1.0)
hi = edgecalc.sobolev_norm(f, 2.0)
assert 0 < lo <= hi, (lo, hi)
print("sobolev", lo, hi)
print("edge", edgecalc.edge_norm(f, 2.0, 1.0))

with tempfile.TemporaryDirectory() as d:
    path = str(Path(d) / "f.json")
    f.save(path)
    back = edgecalc.Field.load(path)
    assert (back - f).max_abs() == 0.0

roots = edgecalc.indicial_roots("hodge-derham", (-3.0, 3.0), band_limit=1)
assert roots, "expected indicial roots"
print("roots", roots[:3])
report = edgecalc.indicial_report("hodge-derham", (-1.5, 2.5), band_limit=1)
print("admissible", report["admissible"])

ell = edgecalc.check_ellipticity("hodge-derham", seed=0, samples=20)
print("elliptic", ell["pass"])

emb = edgecalc.Embedding.circle_cone()
small = edgecalc.Grid(t_half=4.0, n_t=32, n_sigma=8, n_u=8)
sl = emb.is_special_lagrangian(small)
assert sl["pass"], sl
off = edgecalc.Embedding.circle_cone(emb.phase + 0.5).is_special_lagrangian(small)
assert not off["pass"]
print("special lagrangian ok")

assert edgecalc.run_cli(["roots", "--op", "nope", "--window", "0:1"]) == 1
print("smoke test passed")

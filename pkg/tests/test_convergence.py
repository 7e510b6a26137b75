import io

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from polyvem.assembly import Discretization
from polyvem.convergence import (CSV_HEADER, ConvergenceRecord, NonConvergenceError,
                                 StudyConfig, compute_errors, eoc, run_convergence, write_csv)
from polyvem.mesh import generate, write_mesh
from polyvem.polyquad import triangle_rule
from polyvem.problems import paper_problem, poisson_patch_problem
from polyvem.solver import fixed_point_solve

PROBLEM = paper_problem()


# -- eoc ------------------------------------------------------------------------

def test_eoc_published_pairs():
    assert eoc((1.30e-2, 9), (3.40e-3, 34)) == pytest.approx(2.018, abs=1e-3)
    assert eoc((4.96e-2, 34), (2.51e-2, 129)) == pytest.approx(1.022, abs=1e-3)


def test_eoc_equal_errors():
    assert eoc((0.1, 10), (0.1, 40)) == 0.0


def test_eoc_halving_h_quarter_error():
    assert eoc((1.0, 100), (0.25, 400)) == pytest.approx(2.0, rel=1e-14)


@pytest.mark.parametrize("prev, curr", [((0.0, 9), (1.0, 34)), ((1.0, 9), (-1.0, 34)),
                                        ((1.0, 34), (0.5, 34))])
def test_eoc_rejects(prev, curr):
    with pytest.raises(ValueError):
        eoc(prev, curr)


# -- errors -----------------------------------------------------------------------

def test_interpolant_error_quarters_on_refinement():
    errs = []
    for n in (16, 32):
        d = Discretization(generate("squares", n, 0), 1)
        errs.append(compute_errors(d, d.interpolate(PROBLEM.exact_u), PROBLEM)[0])
    assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.15)


def test_patch_solution_has_no_error():
    prob = poisson_patch_problem([[0, 0, 1], [0, 0, 0], [1, 0, 0]])
    d = Discretization(generate("voronoi", 4, 0), 2)
    u = fixed_point_solve(d, prob).solution
    e0, e1 = compute_errors(d, u, prob)
    assert e0 <= 1e-10 and e1 <= 1e-10


def test_zero_solution_relative_error_is_one():
    d = Discretization(generate("squares", 8, 0), 2)
    e0, e1 = compute_errors(d, np.zeros(d.n_dofs), PROBLEM)
    assert e0 == pytest.approx(1.0, rel=1e-9) and e1 == pytest.approx(1.0, rel=1e-9)


def test_absolute_errors():
    # k=3 integrates at exactness 8, exact for the squared bubble
    d = Discretization(generate("squares", 4, 0), 3)
    e0, e1 = compute_errors(d, np.zeros(d.n_dofs), PROBLEM, relative=False)
    assert e0 == pytest.approx(1 / 30, rel=1e-12) and e1 == pytest.approx(1 / np.sqrt(45), rel=1e-12)


def test_errors_need_exact_solution():
    d = Discretization(generate("squares", 2, 0), 1)
    p = PROBLEM
    with pytest.raises(ValueError):
        compute_errors(d, np.zeros(d.n_dofs), type(p)("x", p.kappa, p.kappa_u, p.f))


# -- agreement with linear finite elements on triangles --------------------------

def _p1_fem(mesh, problem, tol=1e-14):
    """Independent P1 finite elements with the frozen-coefficient iteration.

    Each triangle is split at its centroid and integrated with the degree-4
    triangle rule; the load uses the mean of each hat function, (1/3) int_T f.
    """
    ref = triangle_rule(4)
    n = mesh.n_vertices
    tris = np.array([np.asarray(c) for c in mesh.cells])
    pts, wts, bary, grads = [], [], [], []
    for t in tris:
        p = mesh.vertices[t]
        c = p.mean(0)
        m = np.column_stack([p[1] - p[0], p[2] - p[0]])
        minv = np.linalg.inv(m)
        # gradients of the barycentric coordinates
        g = np.vstack([-minv.sum(0), minv])
        q_all, w_all = [], []
        for a, b in ((p[0], p[1]), (p[1], p[2]), (p[2], p[0])):
            e1, e2 = a - c, b - c
            jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
            q_all.append(c + ref.points[:, :1] * e1 + ref.points[:, 1:] * e2)
            w_all.append(jac * ref.weights)
        q, w = np.concatenate(q_all), np.concatenate(w_all)
        lam = (q - p[0]) @ minv.T
        pts.append(q)
        wts.append(w)
        bary.append(np.column_stack([1 - lam.sum(1), lam]))
        grads.append(g)
    load = np.zeros(n)
    for t, q, w in zip(tris, pts, wts):
        load[t] += (w @ problem.f(q[:, 0], q[:, 1])) / 3
    interior = np.flatnonzero(~mesh.boundary_vertex)
    u = np.zeros(n)
    for _ in range(100):
        rows, cols, vals = [], [], []
        for t, w, lam, g in zip(tris, wts, bary, grads):
            kap = w @ problem.kappa(lam @ u[t])
            ke = kap * g @ g.T
            rows.append(np.repeat(t, 3))
            cols.append(np.tile(t, 3))
            vals.append(ke.ravel())
        a = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        new = np.zeros(n)
        new[interior] = spsolve(a[interior][:, interior].tocsc(), load[interior])
        done = np.linalg.norm(new - u) <= tol
        u = new
        if done:
            return u
    raise RuntimeError("reference iteration did not converge")


def test_consistency_part_equals_linear_finite_elements():
    mesh = generate("triangles", 8, 0)
    ref = _p1_fem(mesh, PROBLEM)
    d = Discretization(mesh, 1)
    vem = fixed_point_solve(d, PROBLEM, tol=1e-14, stabilize=False).solution
    assert np.linalg.norm(vem - ref) <= 1e-9
    full = fixed_point_solve(d, PROBLEM, tol=1e-14).solution
    # the stabilised solution differs from it by less than the discretisation error
    disc_err = np.max(np.abs(full - d.interpolate(PROBLEM.exact_u)))
    assert np.max(np.abs(full - vem)) < disc_err


def test_stabilizer_vanishes_for_linear_triangles():
    """On a triangle with k=1 the local space is P1, so I - D Pi is zero."""
    d = Discretization(generate("triangles", 4, 1), 1)
    for p in d.projectors:
        assert np.abs(np.eye(3) - p.dof_of_poly @ p.pizero).max() <= 1e-13


# -- study driver --------------------------------------------------------------

def test_csv_is_reproducible(tmp_path):
    outs = []
    for i in range(2):
        cfg = StudyConfig(mesh="voronoi", n0=4, levels=2, seed=3, out=str(tmp_path / f"{i}.csv"))
        run_convergence(cfg)
        outs.append((tmp_path / f"{i}.csv").read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3 and lines[1].split(",")[5] == ""


def test_records_and_rates_on_squares():
    recs = run_convergence(StudyConfig(mesh="squares", n0=8, levels=4))
    assert [r.ndof for r in recs] == [49, 225, 961, 3969]
    assert recs[-1].eoc_l2 == pytest.approx(2.0, abs=0.1)
    assert recs[-1].eoc_h1 == pytest.approx(1.0, abs=0.1)
    assert all(r.fp_iters and r.nr_iters for r in recs)
    assert all(b.h < a.h for a, b in zip(recs, recs[1:]))


@pytest.mark.parametrize("kind", ["squares", "triangles", "quads", "voronoi"])
def test_patch_problem_exact_at_every_level(kind):
    recs = run_convergence(StudyConfig(mesh=kind, n0=2, levels=3, degree=2, problem="patch:2"))
    for r in recs:
        assert r.err_l2_rel <= 1e-9 and r.err_h1_rel <= 1e-9


def test_single_solver_column_left_blank():
    recs = run_convergence(StudyConfig(mesh="squares", n0=4, levels=2, solver="fp"))
    assert recs[0].nr_iters is None and recs[0].row()[-1] == ""


def test_nonconvergence_raises_with_records():
    with pytest.raises(NonConvergenceError) as err:
        run_convergence(StudyConfig(mesh="squares", n0=4, levels=2, max_iter=2))
    assert len(err.value.records) == 2


def test_file_mesh_runs_one_level(tmp_path):
    path = tmp_path / "m.pmesh"
    write_mesh(generate("voronoi", 6, 1), path)
    recs = run_convergence(StudyConfig(mesh=f"file={path}", levels=4))
    assert len(recs) == 1 and recs[0].eoc_l2 is None


def test_config_errors():
    with pytest.raises(ValueError):
        run_convergence(StudyConfig(levels=1))
    with pytest.raises(ValueError):
        run_convergence(StudyConfig(solver="gmres"))
    with pytest.raises(ValueError, match="level 0"):
        run_convergence(StudyConfig(mesh="hexagons", levels=2))


def test_dumps_written(tmp_path):
    run_convergence(StudyConfig(mesh="squares", n0=2, levels=2, dump_matrices=str(tmp_path)))
    for lvl in ("level0", "level1"):
        assert (tmp_path / lvl / "matrix_fp.txt").stat().st_size > 0
        assert (tmp_path / lvl / "matrix_newton.txt").exists()
        assert any((tmp_path / lvl / "projectors").iterdir())


def test_write_csv_to_stream():
    buf = io.StringIO()
    write_csv([ConvergenceRecord(0, 9, 0.5, 0.1, 0.2, fp_iters=6, nr_iters=4)], buf)
    assert buf.getvalue().splitlines()[1] == "0,9,5.000000e-01,1.000000e-01,2.000000e-01,,,6,4"

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppc_admix.genotype_data import (
    AllelePair,
    GenotypeDataset,
    GenotypeParseError,
    LabelAlignmentError,
    empirical_maf,
    from_alleles,
    inject_ld,
    load_dataset,
    separated_frequencies,
    simulate_dataset,
    split_diploid,
    to_alleles,
    write_genotypes,
    write_labels,
)


def _write(path, text):
    path.write_text(text, encoding="ascii")
    return path


def test_load_small_matrix(tmp_path):
    p = _write(tmp_path / "g.txt", "2 3\n0 1 2\n2 1 0\n")
    ds = load_dataset(p)
    assert (ds.n, ds.L) == (2, 3)
    np.testing.assert_array_equal(ds.genotypes, [[0, 1, 2], [2, 1, 0]])
    assert ds.labels is None


def test_load_rejects_bad_value_with_coordinates(tmp_path):
    p = _write(tmp_path / "g.txt", "2 3\n0 1 2\n2 3 0\n")
    with pytest.raises(GenotypeParseError) as err:
        load_dataset(p)
    assert (err.value.row, err.value.column) == (2, 2)
    assert "'3'" in str(err.value)


@pytest.mark.parametrize(
    "text",
    ["2 3\n0 1 2\n", "2 3\n0 1\n2 1 0\n", "x 3\n0 1 2\n", "1 1\nNA\n", ""],
)
def test_load_rejects_malformed(tmp_path, text):
    with pytest.raises(GenotypeParseError):
        load_dataset(_write(tmp_path / "g.txt", text))


def test_label_count_mismatch(tmp_path):
    g = _write(tmp_path / "g.txt", "2 3\n0 1 2\n2 1 0\n")
    lab = _write(tmp_path / "l.txt", "0\tA\n1\tB\n2\tC\n")
    with pytest.raises(LabelAlignmentError):
        load_dataset(g, lab)


def test_labels_aligned_by_index(tmp_path):
    g = _write(tmp_path / "g.txt", "2 1\n0\n2\n")
    lab = _write(tmp_path / "l.txt", "1\tB\n0\tA\n")
    assert load_dataset(g, lab).labels == ("A", "B")


def test_duplicate_label_index(tmp_path):
    g = _write(tmp_path / "g.txt", "2 1\n0\n2\n")
    lab = _write(tmp_path / "l.txt", "0\tA\n0\tB\n")
    with pytest.raises(LabelAlignmentError):
        load_dataset(g, lab)


def test_write_then_load_round_trip(tmp_path):
    ds, _ = simulate_dataset(7, 11, 2, seed=4)
    write_genotypes(tmp_path / "g.txt", ds.genotypes)
    write_labels(tmp_path / "l.txt", ds.labels)
    back = load_dataset(tmp_path / "g.txt", tmp_path / "l.txt")
    np.testing.assert_array_equal(back.genotypes, ds.genotypes)
    assert back.labels == ds.labels


def test_dataset_invariants():
    with pytest.raises(ValueError):
        GenotypeDataset(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        GenotypeDataset(np.zeros((2, 2)), snp_order=("a", "a"))
    with pytest.raises(LabelAlignmentError):
        GenotypeDataset(np.zeros((2, 2)), labels=("a",))
    ds = GenotypeDataset(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ds.genotypes[0, 0] = 1


@pytest.mark.parametrize("g, pair", [(0, (0, 0)), (1, (1, 0)), (2, (1, 1))])
def test_split_diploid(g, pair):
    assert split_diploid(g) == AllelePair(*pair)


@pytest.mark.parametrize("g", [-1, 3, 1.5, None])
def test_split_diploid_domain(g):
    with pytest.raises(ValueError):
        split_diploid(g)


@given(st.lists(st.lists(st.integers(0, 2), min_size=1, max_size=6), min_size=1, max_size=6).filter(
    lambda rows: len({len(r) for r in rows}) == 1
))
def test_split_round_trip(rows):
    g = np.array(rows)
    x = to_alleles(g)
    np.testing.assert_array_equal(from_alleles(x), g)
    for v in g.ravel():
        assert sum(split_diploid(int(v))) == v
    # heterozygotes are (1, 0)
    assert np.all(x[g == 1] == [1, 0])


def test_empirical_maf_cases():
    assert np.all(empirical_maf(GenotypeDataset(np.zeros((3, 4)))) == 0)
    assert np.all(empirical_maf(GenotypeDataset(np.full((3, 4), 2))) == 1)
    assert empirical_maf(GenotypeDataset(np.array([[0], [1], [2]])))[0] == 0.5


def test_simulate_deterministic():
    a, ta = simulate_dataset(30, 40, 3, seed=9)
    b, tb = simulate_dataset(30, 40, 3, seed=9)
    np.testing.assert_array_equal(a.genotypes, b.genotypes)
    np.testing.assert_array_equal(ta.z_true, tb.z_true)
    c, _ = simulate_dataset(30, 40, 3, seed=10)
    assert not np.array_equal(a.genotypes, c.genotypes)


def test_simulate_truth_invariants():
    ds, truth = simulate_dataset(25, 30, 3, alpha=0.5, seed=1)
    np.testing.assert_allclose(truth.theta_true.sum(axis=1), 1.0, atol=1e-9)
    assert truth.z_true.min() >= 0 and truth.z_true.max() < 3
    assert np.all((truth.phi_true > 0) & (truth.phi_true < 1))
    assert len(ds.labels) == 25


def test_simulate_near_fixed_allele():
    phi = np.full((50, 1), 0.999)
    ds, _ = simulate_dataset(100, 50, 1, phi_spec=phi, seed=2)
    assert np.mean(ds.genotypes == 2) > 0.99


def test_simulate_degenerate_theta():
    _, truth = simulate_dataset(10, 20, 2, theta=[1.0, 0.0], seed=3)
    assert np.all(truth.z_true == 0)


def test_simulate_maf_concentration():
    ds, _ = simulate_dataset(5000, 1, 1, phi_spec=np.array([[0.3]]), seed=5)
    assert abs(empirical_maf(ds)[0] - 0.3) < 0.02


def test_simulate_maf_matches_expected_mixture():
    # E[maf_l] = sum_k E[theta_k] phi_lk = mean of phi over k for Dir(1)
    phi = np.array([[0.1, 0.7], [0.5, 0.9], [0.2, 0.2]])
    ds, _ = simulate_dataset(5000, 3, 2, phi_spec=phi, seed=6)
    np.testing.assert_allclose(empirical_maf(ds), phi.mean(axis=1), atol=0.02)


@pytest.mark.parametrize("phi", [0.0, 1.0])
def test_simulate_rejects_closed_interval(phi):
    with pytest.raises(ValueError):
        simulate_dataset(5, 3, 1, phi_spec=np.full((3, 1), phi))


def test_separated_frequencies_means():
    _, truth = simulate_dataset(5, 4000, 2, phi_spec=separated_frequencies([0.1, 0.9]), seed=1)
    np.testing.assert_allclose(truth.phi_true.mean(axis=0), [0.1, 0.9], atol=0.01)


def test_inject_ld_blocks():
    g = np.arange(6)[None, :].repeat(3, axis=0) % 3
    ds = GenotypeDataset(g)
    out = inject_ld(ds, 3)
    np.testing.assert_array_equal(out.genotypes, g[:, [0, 0, 0, 3, 3, 3]])
    assert (out.n, out.L) == (ds.n, ds.L)


def test_inject_ld_preserves_heads_and_partial_block():
    ds, _ = simulate_dataset(20, 7, 2, seed=8)
    out = inject_ld(ds, 3)
    np.testing.assert_array_equal(out.genotypes[:, [0, 3, 6]], ds.genotypes[:, [0, 3, 6]])
    np.testing.assert_array_equal(empirical_maf(out)[[0, 3, 6]], empirical_maf(ds)[[0, 3, 6]])


@pytest.mark.parametrize("block", [1, 0, 8])
def test_inject_ld_domain(block):
    ds, _ = simulate_dataset(4, 7, 1, seed=0)
    with pytest.raises(ValueError):
        inject_ld(ds, block)

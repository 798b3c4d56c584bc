import itertools
import logging

import numpy as np
import pytest

from chatterkit.errors import DegenerateMesh, InvalidParameter, InvalidPixelSize, SignalTooShort, TooFewPoints
from chatterkit.tda import (
    DiagramFeatures,
    EmbeddingParams,
    LandscapeVectorizer,
    PersistenceDiagram,
    PersistenceImager,
    PointCloud,
    TdaParams,
    TemplateFunctionVectorizer,
    carlsson_coordinates,
    carlsson_feature_subsets,
    diagrams_for_records,
    estimate_delay,
    estimate_dimension_fnn,
    lagrange_basis,
    landscape_features,
    landscape_nodes,
    landscape_values,
    make_vectorizer,
    persistence_image,
    persistence_weight,
    record_diagram,
    rips_persistence_h1,
    takens_embed,
    template_function_features,
)

from .conftest import tone


def _reduced_h1(points: np.ndarray) -> np.ndarray:
    """H1 pairs by Z2 column reduction of the full Rips boundary matrix up to triangles."""
    n = len(points)
    dist = np.linalg.norm(points[:, None] - points[None, :], axis=2)
    simplices = [(0.0, 0, (i,)) for i in range(n)]
    simplices += [(dist[i, j], 1, (i, j)) for i, j in itertools.combinations(range(n), 2)]
    simplices += [(max(dist[i, j], dist[i, k], dist[j, k]), 2, (i, j, k))
                  for i, j, k in itertools.combinations(range(n), 3)]
    simplices.sort(key=lambda s: (s[0], s[1]))
    position = {s[2]: p for p, s in enumerate(simplices)}
    columns = []
    for value, dim, vertices in simplices:
        faces = {position[f] for f in itertools.combinations(vertices, dim)} if dim else set()
        columns.append(faces)
    low_owner = {}
    pairs = []
    for j, col in enumerate(columns):
        while col and max(col) in low_owner:
            col ^= columns[low_owner[max(col)]]
        if col:
            low = max(col)
            low_owner[low] = j
            if simplices[low][1] == 1:
                birth, death = simplices[low][0], simplices[j][0]
                if death - birth > 1e-9:
                    pairs.append((birth, death))
    return np.array(sorted(pairs)).reshape(-1, 2)


def _significant(diagram: PersistenceDiagram) -> np.ndarray:
    return np.array(sorted(map(tuple, diagram.pairs[diagram.lifetimes > 1e-9]))).reshape(-1, 2)


def _circle(n, radius=1.0, centre=(0.0, 0.0)):
    theta = 2 * np.pi * np.arange(n) / n
    return np.c_[centre[0] + radius * np.cos(theta), centre[1] + radius * np.sin(theta)]


def test_persistence_matches_reduction():
    rng = np.random.default_rng(7)
    for _ in range(50):
        points = rng.uniform(size=(int(rng.integers(5, 16)), 2))
        got = _significant(rips_persistence_h1(PointCloud(points)))
        np.testing.assert_allclose(got, _reduced_h1(points), atol=1e-9)


def test_circle_has_one_loop():
    diagram = rips_persistence_h1(PointCloud(_circle(20)))
    assert np.count_nonzero(diagram.lifetimes > 1.0) == 1
    assert np.all(diagram.deaths > diagram.births)


def test_line_has_no_loops():
    line = np.c_[np.linspace(0, 1, 15), np.zeros(15)]
    assert len(rips_persistence_h1(PointCloud(line))) == 0


def test_two_circles():
    points = np.vstack([_circle(20), _circle(20, centre=(5.0, 0.0))])
    diagram = rips_persistence_h1(PointCloud(points))
    assert np.count_nonzero(diagram.lifetimes > 1.0) == 2


def test_subsampling_and_too_few_points():
    points = np.random.default_rng(0).normal(size=(300, 3))
    a = rips_persistence_h1(PointCloud(points), max_points=60, seed=4)
    b = rips_persistence_h1(PointCloud(points), max_points=60, seed=4)
    np.testing.assert_array_equal(a.pairs, b.pairs)
    with pytest.raises(TooFewPoints):
        rips_persistence_h1(PointCloud(np.zeros((3, 2))))


def test_diagram_validation_and_io(tmp_path):
    with pytest.raises(InvalidParameter):
        PersistenceDiagram([[1.0, 0.5]])
    with pytest.raises(InvalidParameter):
        PersistenceDiagram([[0.0, np.inf]])
    d = PersistenceDiagram([[0.1, 0.7], [0.2, 0.3]])
    d.save(tmp_path / "d.txt")
    np.testing.assert_array_equal(PersistenceDiagram.load(tmp_path / "d.txt").pairs, d.pairs)
    PersistenceDiagram().save(tmp_path / "empty.txt")
    assert len(PersistenceDiagram.load(tmp_path / "empty.txt")) == 0


def test_carlsson_coordinates():
    d = PersistenceDiagram([[1.0, 3.0], [2.0, 4.0]])
    np.testing.assert_allclose(carlsson_coordinates(d), [6.0, 2.0, 80.0, 16.0, 2.0])
    np.testing.assert_array_equal(carlsson_coordinates(PersistenceDiagram()), np.zeros(5))


def test_carlsson_against_direct_sums():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        births = rng.uniform(0, 1, n)
        deaths = births + rng.uniform(0.01, 1, n)
        life = deaths - births
        expected = [
            sum(b * l for b, l in zip(births, life)),
            sum((deaths.max() - e) * l for e, l in zip(deaths, life)),
            sum(b**2 * l**4 for b, l in zip(births, life)),
            sum((deaths.max() - e) ** 2 * l**4 for e, l in zip(deaths, life)),
            max(life),
        ]
        got = carlsson_coordinates(PersistenceDiagram(np.c_[births, deaths]))
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_persistence_image_ignores_point_order():
    rng = np.random.default_rng(2)
    for _ in range(20):
        births = rng.uniform(0, 1, 8)
        pairs = np.c_[births, births + rng.uniform(0.05, 1, 8)]
        shuffled = pairs[rng.permutation(8)]
        np.testing.assert_allclose(persistence_image(PersistenceDiagram(shuffled)),
                                   persistence_image(PersistenceDiagram(pairs)), rtol=1e-12, atol=1e-15)


def test_landscapes_are_ordered():
    rng = np.random.default_rng(3)
    for _ in range(20):
        births = rng.uniform(0, 1, 6)
        d = PersistenceDiagram(np.c_[births, births + rng.uniform(0.05, 1, 6)])
        mesh = np.linspace(0.0, 2.0, 101)
        levels = [landscape_values(d, k, mesh) for k in (1, 2, 3)]
        assert np.all(levels[2] >= 0)
        assert np.all(levels[0] >= levels[1]) and np.all(levels[1] >= levels[2])


def test_carlsson_subsets():
    subsets = carlsson_feature_subsets()
    assert len(subsets) == 31
    assert subsets[0] == ("f1",)
    assert subsets[-1] == ("f1", "f2", "f3", "f4", "f5")


def test_persistence_weight():
    np.testing.assert_allclose(persistence_weight([0.5, 1.0, 2.0], 1.0), [0.5, 1.0, 1.0])
    np.testing.assert_array_equal(persistence_weight([0.5, 0.0], 0.0), [1.0, 0.0])


def test_persistence_image_mass():
    d = PersistenceDiagram([[0.5, 1.0]])
    image = persistence_image(d, sigma=0.05, pixel_size=0.1)
    assert image.size == 100
    assert image.sum() == pytest.approx(1.0, abs=1e-6)
    # rows are lifetimes, columns births: the mass sits at lifetime 0.5, birth 0.5
    grid = image.reshape(10, 10)
    assert grid[4:6, 4:6].sum() > 0.85
    assert np.all(persistence_image(PersistenceDiagram()) == 0)
    assert persistence_image(PersistenceDiagram([[1.25, 1.5]])).size > 100
    with pytest.raises(InvalidPixelSize):
        persistence_image(d, pixel_size=0.0)


def test_persistence_imager_freezes_source_ranges():
    source = [PersistenceDiagram([[0.1, 0.5], [0.2, 0.9]]), PersistenceDiagram([[0.3, 0.6]])]
    imager = PersistenceImager(sigma=0.1, pixel_size=0.1).fit(source)
    rows = imager.transform(source + [PersistenceDiagram([[3.0, 9.0]]), PersistenceDiagram()])
    assert rows.shape == (4, imager.n_features)
    assert len(imager.feature_names) == imager.n_features
    assert np.all(rows[3] == 0)
    assert rows[2].sum() > 0


def test_landscape_single_tent():
    d = PersistenceDiagram([[0.0, 2.0]])
    np.testing.assert_allclose(landscape_values(d, 1, [0.0, 1.0, 2.0]), [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(landscape_values(d, 2, [1.0]), [0.0])
    xs, ys = landscape_nodes(d, 1)
    np.testing.assert_allclose(xs, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(ys, [0.0, 1.0, 0.0])


def test_second_landscape():
    d = PersistenceDiagram([[0.0, 4.0], [1.0, 3.0]])
    np.testing.assert_allclose(landscape_values(d, 1, [2.0]), [2.0])
    np.testing.assert_allclose(landscape_values(d, 2, [2.0]), [1.0])


def test_landscape_vectorizer_shares_mesh():
    diagrams = [PersistenceDiagram([[0.0, 2.0]]), PersistenceDiagram([[1.0, 5.0]])]
    rows = landscape_features(diagrams)
    vectorizer = LandscapeVectorizer(1).fit(diagrams)
    assert rows.shape == (2, vectorizer.mesh_.size)
    assert len(vectorizer.feature_names) == rows.shape[1]
    with pytest.raises(InvalidParameter):
        LandscapeVectorizer(0)


def test_lagrange_basis_is_cardinal():
    mesh = np.array([0.0, 0.3, 0.7, 1.0])
    np.testing.assert_allclose(lagrange_basis(mesh, mesh), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(lagrange_basis(mesh, np.array([0.42])).sum(axis=0), [1.0])
    with pytest.raises(DegenerateMesh):
        lagrange_basis([1.0, 1.0], [0.5])


def test_template_function_worked_example():
    d = PersistenceDiagram([[0.5, 1.0]])
    np.testing.assert_allclose(template_function_features([d], [0.0, 1.0], [0.0, 1.0]), [[0.25] * 4])


def test_template_vectorizer():
    source = [PersistenceDiagram([[0.1, 0.5], [0.2, 0.9]]), PersistenceDiagram([[0.3, 0.6]])]
    vectorizer = TemplateFunctionVectorizer(3, 4).fit(source)
    rows = vectorizer.transform(source + [PersistenceDiagram([[5.0, 9.0]]), PersistenceDiagram()])
    assert rows.shape == (4, 12)
    assert np.all(np.isfinite(rows))
    assert np.all(rows[3] == 0)
    assert vectorizer.feature_names[0] == "tf_0_0"
    with pytest.raises(DegenerateMesh):
        TemplateFunctionVectorizer(1, 4)


def test_takens_embedding():
    cloud = takens_embed(np.arange(100.0), EmbeddingParams(3, 6))
    assert len(cloud) == 88
    np.testing.assert_array_equal(cloud.points[0], [0.0, 6.0, 12.0])
    # a quarter-period delay turns a sine into the unit circle
    circle = takens_embed(tone(100.0, 10000.0, 1000), EmbeddingParams(2, 25))
    np.testing.assert_allclose(np.linalg.norm(circle.points, axis=1), 1.0, atol=1e-6)
    with pytest.raises(SignalTooShort):
        takens_embed(np.arange(10.0), EmbeddingParams(4, 3))
    with pytest.raises(InvalidParameter):
        EmbeddingParams(1, 1)


def test_delay_estimate(rng, caplog):
    estimate = estimate_delay(tone(100.0, 10000.0, 1000), 10000.0)
    assert estimate.tau == 25
    assert estimate.dominant_hz == pytest.approx(100.0)
    assert not estimate.degenerate
    assert "Flat spectrum" not in caplog.text
    with caplog.at_level(logging.WARNING, logger="chatterkit.tda"):
        assert estimate_delay(rng.standard_normal(1000), 10000.0).degenerate
    assert any(r.levelno == logging.WARNING and "Flat spectrum" in r.getMessage() for r in caplog.records)


def test_fnn_dimension(rng):
    x = tone(97.3, 10000.0, 2000)
    tau = estimate_delay(x, 10000.0).tau
    estimate = estimate_dimension_fnn(x, tau)
    assert estimate.dimension == 2
    assert not estimate.capped
    noise = estimate_dimension_fnn(rng.standard_normal(2000), 1, max_dimension=3)
    assert noise.capped and noise.dimension == 3
    assert len(noise.fnn_fractions) == 3
    with pytest.raises(SignalTooShort):
        estimate_dimension_fnn(np.arange(50.0), 5)


def test_record_diagram_and_cache(tmp_path, make_record):
    records = [make_record(tone(97.3, 10000.0, 2000, amplitude=a), fs=10000.0) for a in (1.0, 2.0)]
    params = TdaParams(max_points=150)
    diagram = record_diagram(records[0], params)
    assert diagram.lifetimes.max() > 0.5

    first = diagrams_for_records(records, params, cache_dir=tmp_path, n_jobs=1)
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"{r.id}.txt" for r in records)
    cached = diagrams_for_records(records, params, cache_dir=tmp_path, n_jobs=1)
    for a, b in zip(first, cached):
        np.testing.assert_array_equal(a.pairs, b.pairs)


def test_diagram_features_fit_on_source():
    features = DiagramFeatures("pi", TdaParams(pixel_size=0.2))
    features.add_tag("a", [PersistenceDiagram([[0.1, 0.5]]), PersistenceDiagram([[0.2, 0.4]])], ["a0", "a1"], [0, 1])
    features.add_tag("b", [PersistenceDiagram([[0.3, 1.5]])], ["b0"], [1])
    from_a = features.for_source("a")
    assert set(from_a) == {"a", "b"}
    assert from_a["a"].feature_names == from_a["b"].feature_names
    assert from_a["b"].record_ids == ["b0"]
    from_b = features.for_source("b")
    assert from_b["a"].n_features == from_b["b"].n_features

    cc = DiagramFeatures("cc")
    cc.add_tag("a", [PersistenceDiagram([[1.0, 3.0], [2.0, 4.0]])], ["a0"], [1])
    assert cc.for_source("a")["a"].feature_names == ["f1", "f2", "f3", "f4", "f5"]
    with pytest.raises(InvalidParameter):
        make_vectorizer("xx")

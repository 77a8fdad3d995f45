import numpy as np
import pytest

from flatplan import SeedInCollision, VehicleGeometry
from flatplan.corridor import OccupancyGrid, build_corridor, contains_footprint, footprint_in_collision


def make_grid(width=100, height=100, resolution=0.25, origin=(-12.5, -12.5)):
    return OccupancyGrid(resolution=resolution, origin=np.array(origin), width=width, height=height)


def small_geom():
    return VehicleGeometry(
        wheelbase=2.0, body_vertices=[[1.0, 0.5], [1.0, -0.5], [-1.0, -0.5], [-1.0, 0.5]]
    )


class TestBuildCorridor:
    def test_empty_grid_full_extent(self):
        grid = make_grid()
        cor = build_corridor(grid, [(0.0, 0.0, 0.0)], small_geom(), max_extent=10.0)
        assert len(cor) == 1
        verts = cor.cell_vertices(0)
        assert verts[:, 0].max() == pytest.approx(10.0)
        assert verts[:, 0].min() == pytest.approx(-10.0)
        assert verts[:, 1].max() == pytest.approx(10.0)
        assert verts[:, 1].min() == pytest.approx(-10.0)

    def test_wall_ahead_limits_front(self):
        grid = make_grid()
        # wall of occupied cells at x ~= 2.0 spanning all y
        xs = np.full(grid.height, int((2.0 - grid.origin[0]) / grid.resolution))
        ys = np.arange(grid.height)
        grid.occupy_cells(np.stack([xs, ys], axis=1))
        cor = build_corridor(grid, [(0.0, 0.0, 0.0)], small_geom(), max_extent=8.0)
        verts = cor.cell_vertices(0)
        front = verts[:, 0].max()
        assert abs(front - 2.0) <= grid.resolution + 1e-9
        assert verts[:, 0].min() == pytest.approx(-8.0)
        assert verts[:, 1].max() == pytest.approx(8.0)
        assert verts[:, 1].min() == pytest.approx(-8.0)

    def test_seed_in_collision(self):
        grid = make_grid()
        ix = int((0.0 - grid.origin[0]) / grid.resolution)
        grid.occupy_cells([[ix, ix]])
        with pytest.raises(SeedInCollision) as ei:
            build_corridor(grid, [(5.0, 5.0, 0.0), (0.0, 0.0, 0.0)], small_geom())
        assert ei.value.seed_index == 1

    def test_cells_obstacle_free(self, rng):
        grid = make_grid()
        occ = rng.integers(0, 100, size=(60, 2))
        # keep a clear pocket around the seed
        occ = occ[np.abs(occ - 50).max(axis=1) > 10]
        grid.occupy_cells(occ)
        seed = (0.0, 0.0, float(rng.uniform(-np.pi, np.pi)))
        cor = build_corridor(grid, [seed], small_geom(), max_extent=9.0)
        centers = grid.occupied_centers()
        a, b = cor.normals[0], cor.offsets[0]
        inside = np.all(centers @ a.T - b[None, :] < -1e-9, axis=1)
        assert not inside.any()

    def test_rotated_seed_contains_footprint(self, rng):
        grid = make_grid()
        geom = small_geom()
        for _ in range(10):
            theta = float(rng.uniform(-np.pi, np.pi))
            cor = build_corridor(grid, [(1.0, -2.0, theta)], geom, max_extent=6.0)
            d_sigma = np.array([np.cos(theta), np.sin(theta)])
            v = contains_footprint(cor.normals[0], cor.offsets[0], np.array([1.0, -2.0]), d_sigma, 1, geom)
            assert v < 0.0

    def test_monotone_in_max_extent(self):
        # growth is longitudinal-first: the front/back faces never shrink
        # when the extent cap grows, and unobstructed growth is monotone in
        # every direction
        grid = make_grid()
        occ = [[20, 30], [70, 60], [40, 80]]
        grid.occupy_cells(occ)
        geom = small_geom()
        small = build_corridor(grid, [(0.0, 0.0, 0.3)], geom, max_extent=4.0)
        large = build_corridor(grid, [(0.0, 0.0, 0.3)], geom, max_extent=9.0)
        # faces are ordered front, left, back, right
        assert np.all(large.offsets[0][[0, 2]] >= small.offsets[0][[0, 2]] - 1e-12)

        free = make_grid()
        small = build_corridor(free, [(1.0, 2.0, 0.7)], geom, max_extent=4.0)
        large = build_corridor(free, [(1.0, 2.0, 0.7)], geom, max_extent=9.0)
        assert np.all(large.offsets[0] >= small.offsets[0] - 1e-12)


class TestContainsFootprint:
    def cell(self):
        a = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        b = np.array([5.0, 5.0, 5.0, 5.0])
        return a, b

    def test_contained_negative(self):
        a, b = self.cell()
        geom = small_geom()
        v = contains_footprint(a, b, np.zeros(2), np.array([1.0, 0.0]), 1, geom)
        assert v == pytest.approx(-4.0)

    def test_front_exit_positive(self):
        a, b = self.cell()
        geom = small_geom()
        v = contains_footprint(a, b, np.array([4.5, 0.0]), np.array([1.0, 0.0]), 1, geom)
        assert v == pytest.approx(0.5)

    def test_matches_brute_force(self, rng):
        from flatplan.flat_model import rotation_from_flat

        a, b = self.cell()
        geom = small_geom()
        for _ in range(50):
            sigma = rng.normal(size=2) * 3
            ds = rng.normal(size=2)
            if np.linalg.norm(ds) < 0.1:
                continue
            eta = int(rng.choice([-1, 1]))
            v = contains_footprint(a, b, sigma, ds, eta, geom)
            rot = rotation_from_flat(ds, eta)
            worst = -np.inf
            for l in geom.body_vertices:
                p = sigma + rot @ l
                for z in range(4):
                    worst = max(worst, a[z] @ p - b[z])
            assert v == pytest.approx(worst, abs=1e-12)


def test_footprint_collision_checks_inflation():
    grid = make_grid()
    ix = int((1.3 - grid.origin[0]) / grid.resolution)
    iy = int((0.0 - grid.origin[1]) / grid.resolution)
    grid.occupy_cells([[ix, iy]])
    geom = small_geom()
    assert not footprint_in_collision(grid, (0.0, 0.0, 0.0), geom)
    fat = VehicleGeometry(wheelbase=2.0, body_vertices=geom.body_vertices, inflation=0.5)
    assert footprint_in_collision(grid, (0.0, 0.0, 0.0), fat)


def test_occupy_polygon_rasterizes_centers():
    grid = make_grid()
    grid.occupy_polygon(np.array([[0.0, 0.0], [0.0, 2.0], [2.0, 2.0], [2.0, 0.0]]))
    centers = grid.occupied_centers()
    assert centers.shape[0] > 0
    assert np.all(centers[:, 0] > 0.0) and np.all(centers[:, 0] < 2.0)
    assert np.all(centers[:, 1] > 0.0) and np.all(centers[:, 1] < 2.0)

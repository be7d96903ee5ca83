#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "semba/types.hpp"

using namespace semba;

TEST_CASE("cell_of uses floor division and clamps the far edge") {
    const GridDims g{20, 32};
    const ImageDims im{1680, 1050};
    CHECK(cell_of({0, 0}, g, im) == Cell{0, 0});
    CHECK(cell_of({52.49, 52.49}, g, im) == Cell{0, 0});
    CHECK(cell_of({52.5, 52.5}, g, im) == Cell{1, 1});
    CHECK(cell_of({1680, 1050}, g, im) == Cell{19, 31});
    CHECK(cell_of({1679.9, 0}, g, im) == Cell{0, 31});
}

TEST_CASE("cell_center lies inside its cell") {
    const GridDims g{20, 32};
    const ImageDims im{1680, 1050};
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            CHECK(cell_of(cell_center({r, c}, g, im), g, im) == Cell{r, c});
        }
    }
    const Point2 p = cell_center({0, 0}, g, im);
    CHECK(p.x == doctest::Approx(26.25));
    CHECK(p.y == doctest::Approx(26.25));
}

TEST_CASE("grid index round trip is row-major") {
    const GridDims g{3, 4};
    CHECK(g.index({1, 2}) == 6);
    for (std::size_t i = 0; i < g.cell_count(); ++i) CHECK(g.index(g.cell_at(i)) == i);
}

TEST_CASE("bbox helpers") {
    const BBox b{10, 20, 30, 60};
    CHECK(b.area() == 800);
    CHECK(b.center() == Point2{20, 40});
    CHECK(b.contains({10, 20}));
    CHECK_FALSE(b.contains({9.9, 30}));
    const BBox c = BBox{-5, -5, 2000, 20}.clipped({100, 100});
    CHECK(c == BBox{0, 0, 100, 20});
    CHECK_FALSE(BBox{5, 5, 5, 10}.valid());
}

TEST_CASE("split_seed gives distinct deterministic streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(split_seed(42, i));
    CHECK(seen.size() == 1000);
    CHECK(split_seed(7, 3) == split_seed(7, 3));
    CHECK(split_seed(7, 3) != split_seed(8, 3));
}

#include <cmath>
#include <string>

#include "doctest.h"
#include "scnfusion/common.hpp"
#include "scnfusion/rng.hpp"

using namespace scnfusion;

TEST_CASE("affine inverse composes to identity") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        Affine m = identity_affine();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) m[r][c] = rng.uniform(-2.0, 2.0);
        for (int r = 0; r < 3; ++r) m[r][r] += 3.0;  // keep it well-conditioned
        Affine inv = invert_affine(m);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += m[i][k] * inv[k][j];
                CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
            }
    }
}

TEST_CASE("singular affine throws") {
    Affine m{};  // all zeros
    CHECK_THROWS_AS(invert_affine(m), DataError);
}

TEST_CASE("fnv1a matches published test vectors") {
    CHECK(fnv1a(nullptr, 0) == 0xcbf29ce484222325ull);
    const char a = 'a';
    CHECK(fnv1a(&a, 1) == 0xaf63dc4c8601ec8cull);
    CHECK(hash_hex("") == "cbf29ce484222325");
}

TEST_CASE("format_double round-trips exactly") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("matrix addressing is row-major") {
    Matrix m(2, 3);
    m.at(1, 2) = 5.0;
    CHECK(m.v[5] == 5.0);
}

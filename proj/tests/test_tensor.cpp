#include <doctest.h>

#include "dermforge/rng.hpp"
#include "dermforge/tensor.hpp"

using namespace dermforge;

TEST_CASE("reshape keeps data and swaps shape") {
    Tensor<float> t({1, 1024, 2, 2});
    for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);

    Tensor<float> flat = t.reshape({1, 4096});
    CHECK(flat.shape() == std::vector<int>{1, 4096});
    CHECK(flat.size() == 4096);
    CHECK(flat[4095] == doctest::Approx(4095.0f));

    Tensor<float> same = t.reshape({1, 1024, 2, 2});
    CHECK(same.shape() == t.shape());
    CHECK(same.vec() == t.vec());

    // round trip restores everything
    Tensor<float> back = flat.reshape({1, 1024, 2, 2});
    CHECK(back.shape() == t.shape());
    CHECK(back.vec() == t.vec());
}

TEST_CASE("reshape rejects element-count mismatch") {
    Tensor<float> t({2, 3});
    CHECK_THROWS_AS(t.reshape({4, 2}), ShapeError);
}

TEST_CASE("matmul identity and hand product") {
    Tensor<float> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0f;
    Tensor<float> m({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor<float> r = matmul(eye, m);
    CHECK(r.vec() == m.vec());

    Tensor<float> a({2, 2}, {1, 2, 3, 4});
    Tensor<float> b({2, 1}, {5, 6});
    Tensor<float> c = matmul(a, b);
    CHECK(c.shape() == std::vector<int>{2, 1});
    CHECK(c[0] == doctest::Approx(17.0f));
    CHECK(c[1] == doctest::Approx(39.0f));
}

TEST_CASE("matmul batch-by-weight shape") {
    Tensor<float> x({90, 4096});
    Tensor<float> w({4096, 256});
    Tensor<float> y = matmul(x, w);
    CHECK(y.shape() == std::vector<int>{90, 256});
}

TEST_CASE("matmul rejects inner mismatch") {
    Tensor<float> a({2, 3});
    Tensor<float> b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("matmul is associative within single-precision tolerance") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        auto rand_mat = [&](int r, int c) {
            Tensor<float> t({r, c});
            for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
            return t;
        };
        Tensor<float> a = rand_mat(4, 6), b = rand_mat(6, 5), c = rand_mat(5, 3);
        Tensor<float> left = matmul(matmul(a, b), c);
        Tensor<float> right = matmul(a, matmul(b, c));
        for (size_t i = 0; i < left.size(); ++i) {
            const float scale = std::max({std::abs(left[i]), std::abs(right[i]), 1.0f});
            CHECK(std::abs(left[i] - right[i]) / scale < 1e-5f);
        }
    }
}

TEST_CASE("matmul_tn and matmul_nt agree with explicit transposes") {
    Rng rng(12);
    Tensor<float> a({5, 3});
    Tensor<float> b({5, 4});
    for (size_t i = 0; i < a.size(); ++i) a[i] = static_cast<float>(rng.uniform(-1, 1));
    for (size_t i = 0; i < b.size(); ++i) b[i] = static_cast<float>(rng.uniform(-1, 1));

    Tensor<float> at({3, 5});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) at.at2(j, i) = a.at2(i, j);
    Tensor<float> expected = matmul(at, b);
    Tensor<float> got = matmul_tn(a, b);
    for (size_t i = 0; i < expected.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]));

    Tensor<float> bt({4, 5});
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) bt.at2(j, i) = b.at2(i, j);
    // at (3,5) * bt^T (5,4) should equal at * b
    Tensor<float> got2 = matmul_nt(at, bt);
    Tensor<float> expected2 = matmul(at, b);
    for (size_t i = 0; i < got2.size(); ++i) CHECK(got2[i] == doctest::Approx(expected2[i]));
}

TEST_CASE("reduce mean, sum, max") {
    Tensor<float> v({3}, {1, 2, 3});
    CHECK(reduce_all(v, ReduceMode::mean)[0] == doctest::Approx(2.0f));

    Tensor<float> z({4, 4});
    CHECK(reduce_all(z, ReduceMode::sum)[0] == doctest::Approx(0.0f));

    Tensor<float> m({2, 2}, {1, 5, 3, 2});
    Tensor<float> rows = reduce(m, {1}, ReduceMode::max);
    CHECK(rows.shape() == std::vector<int>{2});
    CHECK(rows[0] == doctest::Approx(5.0f));
    CHECK(rows[1] == doctest::Approx(3.0f));
}

TEST_CASE("reduce rejects bad axis") {
    Tensor<float> t({2, 2});
    CHECK_THROWS_AS(reduce(t, {2}, ReduceMode::sum), ShapeError);
}

TEST_CASE("reduce mean times count equals sum") {
    Rng rng(13);
    Tensor<float> t({3, 4, 5});
    for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-2, 2));
    for (int axis : {0, 1, 2}) {
        Tensor<float> s = reduce(t, {axis}, ReduceMode::sum);
        Tensor<float> m = reduce(t, {axis}, ReduceMode::mean);
        const float count = static_cast<float>(t.dim(axis));
        for (size_t i = 0; i < s.size(); ++i) {
            const float scale = std::max(std::abs(s[i]), 1.0f);
            CHECK(std::abs(m[i] * count - s[i]) / scale < 1e-6f);
        }
    }
}

TEST_CASE("checked mode flags non-finite results") {
    set_checked_mode(true);
    Tensor<float> a({1, 1}, {std::numeric_limits<float>::max()});
    Tensor<float> b({1, 1}, {std::numeric_limits<float>::max()});
    CHECK_THROWS_AS(matmul(a, b), StateError);
    set_checked_mode(false);
    CHECK_NOTHROW(matmul(a, b));
}

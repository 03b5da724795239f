#include "ttmc/linalg.hpp"
#include "ttmc/models.hpp"
#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace ttmc;
using namespace ttmc::testing;

TEST_CASE("dense_solve") {
    SECTION("identity") {
        Vector b(3);
        b << 1, 2, 3;
        CHECK((dense_solve(Matrix::Identity(3, 3), b) - b).norm() == 0.0);
    }
    SECTION("2x2 diagonal") {
        Matrix a(2, 2);
        a << 2, 0, 0, 4;
        Vector b(2);
        b << 2, 4;
        Vector x = dense_solve(a, b);
        CHECK(x(0) == Catch::Approx(1.0));
        CHECK(x(1) == Catch::Approx(1.0));
    }
    SECTION("random well-conditioned system") {
        std::mt19937_64 rng(5);
        Matrix a = random_matrix(50, 50, rng) + 20.0 * Matrix::Identity(50, 50);
        Vector b = random_matrix(50, 1, rng);
        Vector x = dense_solve(a, b);
        CHECK((a * x - b).norm() <= 1e-10 * (a.norm() * x.norm() + b.norm()));
    }
    SECTION("singular system falls back to least squares") {
        Matrix a = Matrix::Zero(2, 2);
        a(0, 0) = 1.0;
        Vector b(2);
        b << 3, 0;
        Vector x = dense_solve(a, b);
        CHECK((a * x - b).norm() <= 1e-12);
    }
    SECTION("dimension mismatch throws") {
        CHECK_THROWS_AS(dense_solve(Matrix::Identity(2, 2), Vector::Zero(3)), std::invalid_argument);
    }
}

TEST_CASE("minres") {
    SECTION("zero rhs gives zero in zero iterations") {
        LinearMap map = LinearMap::from_matrix(Matrix::Identity(4, 4));
        KrylovResult r = minres(map, Vector::Zero(4), 1e-12, 100);
        CHECK(r.converged);
        CHECK(r.iterations == 0);
        CHECK(r.x.norm() == 0.0);
    }
    SECTION("SPD diagonal terminates within n iterations") {
        Vector d(10);
        for (int i = 0; i < 10; ++i) d(i) = i + 1.0;
        Matrix a = d.asDiagonal();
        Vector b = Vector::Ones(10);
        KrylovResult r = minres(LinearMap::from_matrix(a), b, 1e-10, 10);
        CHECK(r.converged);
        CHECK(r.iterations <= 10);
        CHECK((a * r.x - b).norm() <= 1e-10 * b.norm());
    }
    SECTION("singular consistent system converges") {
        // Path-graph Laplacian; rhs orthogonal to the kernel (constants).
        const int n = 8;
        Matrix a = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            if (i > 0) {
                a(i, i - 1) = -1;
                a(i, i) += 1;
            }
            if (i + 1 < n) {
                a(i, i + 1) = -1;
                a(i, i) += 1;
            }
        }
        std::mt19937_64 rng(6);
        Vector b = random_matrix(n, 1, rng);
        b.array() -= b.mean();
        KrylovResult r = minres(LinearMap::from_matrix(a), b, 1e-10, 200);
        CHECK(r.converged);
        Vector ref = a.completeOrthogonalDecomposition().solve(b);
        CHECK((a * r.x - b).norm() <= 1e-9 * b.norm());
        CHECK((a * ref - b).norm() <= 1e-12 * b.norm());
    }
    SECTION("symmetric indefinite") {
        Matrix a(4, 4);
        a << 2, 1, 0, 0, 1, -3, 1, 0, 0, 1, 4, 1, 0, 0, 1, -5;
        Vector b(4);
        b << 1, 0, 2, -1;
        KrylovResult r = minres(LinearMap::from_matrix(a), b, 1e-12, 100);
        CHECK(r.converged);
        CHECK((a * r.x - b).norm() <= 1e-11 * b.norm());
    }
    SECTION("residuals non-increasing across iteration counts") {
        std::mt19937_64 rng(7);
        Matrix m = random_matrix(12, 12, rng);
        Matrix a = m + m.transpose();
        Vector b = random_matrix(12, 1, rng);
        double prev = b.norm();
        for (int it = 1; it <= 12; ++it) {
            KrylovResult r = minres(LinearMap::from_matrix(a), b, 0.0, it);
            CHECK(r.residual <= prev * (1.0 + 1e-10));
            prev = r.residual;
        }
    }
}

TEST_CASE("gmres_dense") {
    std::mt19937_64 rng(8);
    SECTION("exact initial guess returned unchanged") {
        Matrix a = random_matrix(6, 6, rng) + 8.0 * Matrix::Identity(6, 6);
        Vector x = random_matrix(6, 1, rng);
        Vector b = a * x;
        KrylovResult r = gmres_dense(LinearMap::from_matrix(a), b, x, 3);
        CHECK((r.x - x).norm() <= 1e-13 * x.norm());
    }
    SECTION("tridiagonal system: residual strictly decreases") {
        const int n = 20;
        Matrix a = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            a(i, i) = 2;
            if (i > 0) a(i, i - 1) = -1;
            if (i + 1 < n) a(i, i + 1) = -1;
        }
        Vector b = Vector::Ones(n);
        KrylovResult r = gmres_dense(LinearMap::from_matrix(a), b, Vector::Zero(n), 3);
        CHECK(r.residual < b.norm());
    }
    SECTION("full-dimension run solves the system") {
        Matrix a = random_matrix(15, 15, rng) + 10.0 * Matrix::Identity(15, 15);
        Vector b = random_matrix(15, 1, rng);
        KrylovResult r = gmres_dense(LinearMap::from_matrix(a), b, Vector::Zero(15), 15);
        CHECK(r.residual <= 1e-10 * b.norm());
    }
    SECTION("optimality versus explicit Arnoldi least squares") {
        Matrix a = random_matrix(10, 10, rng);
        Vector b = random_matrix(10, 1, rng);
        for (int steps : {1, 2, 3, 5}) {
            KrylovResult r = gmres_dense(LinearMap::from_matrix(a), b, Vector::Zero(10), steps);
            // No polynomial iterate of the same degree can beat the
            // least-squares optimum; compare against a few random ones.
            for (int t = 0; t < 5; ++t) {
                Vector x = Vector::Zero(10);
                Vector p = b;
                for (int s = 0; s < steps; ++s) {
                    x += random_matrix(1, 1, rng)(0, 0) * p;
                    p = a * p;
                }
                CHECK(r.residual <= (b - a * x).norm() * (1.0 + 1e-10));
            }
        }
    }
}

TEST_CASE("dense_stationary") {
    SECTION("two-state chain") {
        // Rates: 1 for 0->1 and 2 for 1->0; balance gives [2/3, 1/3].
        Matrix q(2, 2);
        q << -1, 1, 2, -2;
        Vector x = dense_stationary(q.transpose());
        CHECK(x(0) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(x(1) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SECTION("symmetric random walk is uniform") {
        Matrix q(3, 3);
        q << -1, 1, 0, 1, -2, 1, 0, 1, -1;
        Vector x = dense_stationary(q.transpose());
        for (int i = 0; i < 3; ++i) CHECK(x(i) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SECTION("overflow model agrees with uniformized power iteration") {
        ModelSpec spec;
        spec.kind = ModelKind::Overflow;
        spec.d = 2;
        spec.cap = 1;
        Matrix a = assemble_dense(build_model(spec));
        Vector x = dense_stationary(a);
        CHECK((a * x).norm() <= 1e-10 * a.norm());
        CHECK(x.minCoeff() >= -1e-12);
        CHECK(x.sum() == Catch::Approx(1.0).epsilon(1e-13));

        // Long-run power iteration on the uniformized transition matrix.
        const double gamma = a.diagonal().cwiseAbs().maxCoeff() * 1.25;
        Matrix p = Matrix::Identity(4, 4) + a / gamma;
        Vector y = Vector::Constant(4, 0.25);
        for (int it = 0; it < 20000; ++it) y = p * y;
        y /= y.sum();
        CHECK((x - y).cwiseAbs().maxCoeff() <= 1e-8);

        // SVD null-space cross-check.
        Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullV);
        Vector z = svd.matrixV().col(3);
        z /= z.sum();
        CHECK((x - z).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SECTION("non-irreducible chain is flagged") {
        // Two absorbing states: the stationary distribution is not unique and
        // the row-replaced system is singular.
        Matrix a = Matrix::Zero(2, 2);
        CHECK_THROWS_AS(dense_stationary(a), std::runtime_error);
    }
}

TEST_CASE("strongly_connected") {
    CHECK(strongly_connected({{}}));
    CHECK_FALSE(strongly_connected({{1}, {}}));
    CHECK(strongly_connected({{1}, {0}}));

    ModelSpec spec;
    spec.kind = ModelKind::Overflow;
    spec.d = 3;
    spec.cap = 2;
    Matrix a = assemble_dense(build_model(spec));
    CHECK(strongly_connected(offdiagonal_pattern(a)));
}

TEST_CASE("LinearMap symmetry probe") {
    std::mt19937_64 rng(9);
    Matrix m = random_matrix(8, 8, rng);
    Matrix s = m + m.transpose();
    CHECK(probe_symmetric(LinearMap::from_matrix(s)));
    CHECK_FALSE(probe_symmetric(LinearMap::from_matrix(m)));
}

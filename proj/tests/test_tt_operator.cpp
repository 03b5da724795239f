#include "ttmc/tt_operator.hpp"
#include "ttmc/models.hpp"
#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace ttmc;
using namespace ttmc::testing;

namespace {

TensorTrainOperator identity_operator(const std::vector<Index>& modes) {
    std::vector<std::vector<Matrix>> term(1);
    for (Index m : modes) term[0].push_back(Matrix::Identity(m, m));
    return tt_operator_from_terms(term);
}

std::vector<std::vector<Matrix>> random_terms(const std::vector<Index>& modes, int nterms,
                                              std::mt19937_64& rng) {
    std::vector<std::vector<Matrix>> terms(static_cast<std::size_t>(nterms));
    for (auto& t : terms)
        for (Index m : modes) t.push_back(random_matrix(m, m, rng));
    return terms;
}

}  // namespace

TEST_CASE("tt_apply with identity returns the input") {
    std::mt19937_64 rng(7);
    TensorTrain x = tt_random({3, 4, 2}, 3, rng);
    TensorTrainOperator id = identity_operator({3, 4, 2});
    CHECK(id.max_rank() == 1);
    Vector dx = dense_oracle(x);
    CHECK((dense_oracle(tt_apply(id, x)) - dx).norm() <= 1e-13 * dx.norm());
}

TEST_CASE("tt_apply rank arithmetic") {
    std::mt19937_64 rng(8);
    auto terms = random_terms({3, 3, 3}, 2, rng);
    TensorTrainOperator a = tt_operator_from_terms(terms, /*compress=*/false);
    REQUIRE(a.rank(1) == 2);
    TensorTrain x = tt_random({3, 3, 3}, 3, rng);
    TensorTrain y = tt_apply(a, x);
    for (Index k = 0; k <= 3; ++k) CHECK(y.rank(k) == a.rank(k) * x.rank(k));
}

TEST_CASE("tt_apply matches dense matrix times dense vector") {
    ModelSpec spec;
    spec.kind = ModelKind::Overflow;
    spec.d = 2;
    spec.cap = 2;
    KroneckerModel model = build_model(spec);
    TensorTrainOperator a = kron_to_tt_operator(model);
    Matrix ad = assemble_dense(model);

    std::mt19937_64 rng(9);
    TensorTrain x = tt_random({3, 3}, 2, rng);
    Vector ref = ad * dense_oracle(x);
    Vector got = dense_oracle(tt_apply(a, x));
    CHECK((got - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()));

    CHECK_THROWS_AS(tt_apply(a, tt_ones({3, 4})), std::invalid_argument);
}

TEST_CASE("operator conversion and compression") {
    SECTION("single term gives operator ranks 1") {
        std::mt19937_64 rng(10);
        auto terms = random_terms({4, 3, 2}, 1, rng);
        TensorTrainOperator a = tt_operator_from_terms(terms);
        CHECK(a.max_rank() == 1);
    }
    SECTION("overflow d=2 cap=1 dense expansion matches the Kronecker sum") {
        ModelSpec spec;
        spec.kind = ModelKind::Overflow;
        spec.d = 2;
        spec.cap = 1;
        KroneckerModel model = build_model(spec);
        TensorTrainOperator a = kron_to_tt_operator(model);
        Matrix want = Matrix::Zero(4, 4);
        for (const auto& t : model.terms) want += kron_oracle(t.factors);
        Matrix got = dense_oracle_op(a);
        CHECK((got - want).norm() <= 1e-13 * std::max(1.0, want.norm()));
    }
    SECTION("ranks stay below the term count across the model grid") {
        for (ModelKind kind : {ModelKind::Overflow, ModelKind::OverflowSim, ModelKind::OverflowPerSim,
                               ModelKind::KanbanAlt2, ModelKind::DirectedMetab, ModelKind::DivergingMetab}) {
            for (Index d : {Index(2), Index(3), Index(4)}) {
                for (Index cap : {Index(1), Index(2)}) {
                    ModelSpec spec;
                    spec.kind = kind;
                    spec.d = d;
                    spec.cap = cap;
                    KroneckerModel model = build_model(spec);
                    TensorTrainOperator a = kron_to_tt_operator(model);
                    CHECK(a.max_rank() <= static_cast<Index>(model.terms.size()));
                }
            }
        }
    }
    SECTION("inconsistent factor dimensions throw") {
        std::vector<std::vector<Matrix>> bad(2);
        bad[0] = {Matrix::Identity(2, 2), Matrix::Identity(3, 3)};
        bad[1] = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
        CHECK_THROWS_AS(tt_operator_from_terms(bad), std::invalid_argument);
    }
}

TEST_CASE("operator transpose and Gram operator") {
    std::mt19937_64 rng(11);
    auto terms = random_terms({3, 2, 3}, 3, rng);
    TensorTrainOperator a = tt_operator_from_terms(terms);
    Matrix ad = dense_oracle_op(a);

    CHECK((dense_oracle_op(a.transpose()) - ad.transpose()).norm() <= 1e-12 * ad.norm());

    TensorTrainOperator b = tt_gram_operator(a);
    Matrix bd = dense_oracle_op(b);
    Matrix want = ad.transpose() * ad;
    CHECK((bd - want).norm() <= 1e-11 * std::max(1.0, want.norm()));
}

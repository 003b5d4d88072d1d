#include <doctest.h>

#include <sstream>

#include "figmm/dataset.hpp"
#include "figmm/em.hpp"
#include "figmm/errors.hpp"
#include "figmm/imputation.hpp"
#include "figmm/mixture.hpp"
#include "support/oracles.hpp"

using figmm::CsvOptions;
using figmm::IncompleteDataset;

TEST_SUITE("dataset") {

TEST_CASE("missing tokens populate the response matrix") {
    std::stringstream ss("a,b\n1.5,2\n3,NA\n");
    const IncompleteDataset data = figmm::read_csv(ss);
    CHECK(data.size() == 2);
    CHECK(data.dim() == 2);
    CHECK(data.is_observed(0, 0));
    CHECK(data.is_observed(0, 1));
    CHECK(data.is_observed(1, 0));
    CHECK_FALSE(data.is_observed(1, 1));
    CHECK(std::isnan(data.value(1, 1)));
    CHECK(data.complete_count() == 1);
}

TEST_CASE("the missing token is case-sensitive and configurable") {
    std::stringstream ss("a\nna\n");
    CHECK_THROWS_AS(figmm::read_csv(ss), figmm::IoError);  // "na" is not "NA"

    std::stringstream ss2("a\n.\n2\n");
    CsvOptions opts;
    opts.missing_token = ".";
    const IncompleteDataset data = figmm::read_csv(ss2, opts);
    CHECK_FALSE(data.is_observed(0, 0));
    CHECK(data.value(1, 0) == 2.0);
}

TEST_CASE("unparsable cells carry their coordinates") {
    std::stringstream ss("a,b\n1,2\n3,x7\n");
    try {
        figmm::read_csv(ss, {}, "test.csv");
        FAIL("expected IoError");
    } catch (const figmm::IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("'b'") != std::string::npos);
    }
}

TEST_CASE("empty and header-only files are rejected") {
    std::stringstream empty("");
    CHECK_THROWS_AS(figmm::read_csv(empty), figmm::IoError);
    std::stringstream header_only("a,b\n");
    CHECK_THROWS_AS(figmm::read_csv(header_only), figmm::IoError);
}

TEST_CASE("duplicate ids are rejected when an id column is named") {
    std::stringstream ss("id,a\nu1,1\nu1,2\n");
    CsvOptions opts;
    opts.id_column = "id";
    CHECK_THROWS_AS(figmm::read_csv(ss, opts), figmm::IoError);
}

TEST_CASE("the retail-trade shaped header ingests with partially missing items") {
    std::stringstream ss(
        "mos,Sales00,asales00,Sales01,Inventories00,ainventories00,Inventories01\n"
        "12,100.5,99.0,95.2,200.1,198.4,190.3\n"
        "15,NA,88.1,90.0,NA,170.2,168.8\n"
        "11,75.3,74.2,70.1,150.6,149.9,151.2\n");
    const IncompleteDataset data = figmm::read_csv(ss);
    CHECK(data.dim() == 7);
    CHECK(data.column_index("Sales00") == 1);
    CHECK(data.column_index("Inventories00") == 4);
    CHECK_FALSE(data.is_observed(1, 1));
    CHECK_FALSE(data.is_observed(1, 4));
    CHECK(data.is_observed(1, 2));
    CHECK(data.complete_count() == 2);
}

TEST_CASE("categorical column yields sorted levels and codes") {
    std::stringstream ss("x,a\nred,1\nblue,2\nred,NA\n");
    CsvOptions opts;
    opts.categorical_column = "x";
    const IncompleteDataset data = figmm::read_csv(ss, opts);
    CHECK(data.dim() == 1);
    REQUIRE(data.categorical().has_value());
    const auto& cat = *data.categorical();
    CHECK(cat.levels() == 2);
    CHECK(cat.level_names[0] == "blue");
    CHECK(cat.level_names[1] == "red");
    CHECK(cat.codes == std::vector<int>{1, 0, 1});
}

TEST_CASE("a missing categorical cell is an error") {
    std::stringstream ss("x,a\nred,1\nNA,2\n");
    CsvOptions opts;
    opts.categorical_column = "x";
    CHECK_THROWS_AS(figmm::read_csv(ss, opts), figmm::IoError);
}

TEST_CASE("log transform requires positive observed cells") {
    std::stringstream ss("a\n2.0\nNA\n");
    CsvOptions opts;
    opts.log_transform = true;
    const IncompleteDataset data = figmm::read_csv(ss, opts);
    CHECK(data.value(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    std::stringstream bad("a\n-1\n");
    CHECK_THROWS_AS(figmm::read_csv(bad, opts), figmm::IoError);
}

TEST_CASE("records are grouped by missingness pattern") {
    std::stringstream ss("a,b\n1,2\nNA,4\n5,6\nNA,8\n");
    const IncompleteDataset data = figmm::read_csv(ss);
    CHECK(data.unique_patterns().size() == 2);
    CHECK(data.pattern_index(0) == data.pattern_index(2));
    CHECK(data.pattern_index(1) == data.pattern_index(3));
    CHECK(data.observed_values(1).size() == 1);
    CHECK(data.observed_values(1)(0) == 4.0);
}

TEST_CASE("imputation long-form output round-trips bit-exactly") {
    // run a tiny EM to get a genuine imputation with irrational weights
    figmm::RngStream rng(5);
    Eigen::MatrixXd values(12, 2);
    for (int i = 0; i < 12; ++i) {
        Eigen::Vector2d z;
        rng.fill_normals(z.data(), 2);
        values.row(i) = z.transpose();
    }
    std::vector<std::vector<bool>> observed(12, std::vector<bool>(2, true));
    for (int i = 0; i < 12; i += 3) {
        observed[static_cast<std::size_t>(i)][1] = false;
    }
    const IncompleteDataset data({"a", "b"}, values, observed);
    figmm::EmConfig config;
    config.imputations = 7;
    config.max_iterations = 5;
    config.seed = 9;
    const figmm::EmResult fit = figmm::run_em(data, 2, config);

    std::stringstream ss;
    figmm::write_imputation_csv(ss, fit.imputation, data, {{"seed", "9"}});
    const figmm::LoadedImputation loaded = figmm::read_imputation_csv(ss);
    REQUIRE(loaded.imputation.row_count() == fit.imputation.row_count());
    CHECK((loaded.imputation.values - fit.imputation.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.imputation.weights - fit.imputation.weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.column_names == std::vector<std::string>{"a", "b"});
    CHECK(loaded.record_ids.size() == 12);

    // rebuilt blocks agree with the original counts
    figmm::FractionalImputation rebuilt = loaded.imputation;
    figmm::rebuild_blocks(rebuilt, 2);
    for (int i = 0; i < 12; ++i) {
        CHECK(rebuilt.records[static_cast<std::size_t>(i)].fully_observed ==
              fit.imputation.records[static_cast<std::size_t>(i)].fully_observed);
        CHECK(rebuilt.records[static_cast<std::size_t>(i)].counts ==
              fit.imputation.records[static_cast<std::size_t>(i)].counts);
    }
}

}  // TEST_SUITE

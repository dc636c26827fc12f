#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "vp2p/io.hpp"
#include "vp2p/rng.hpp"

using namespace vp2p;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

Tensor random_tensor(std::vector<uint64_t> dims, uint64_t seed) {
    Tensor t(std::move(dims));
    auto rng = make_rng(seed);
    fill_gaussian(rng, t.data.data(), t.data.size());
    return t;
}

void corrupt_byte(const std::string& path, std::streamoff at, char value) {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(at);
    f.put(value);
}

}  // namespace

TEST_CASE("tensor files round-trip bit-exactly across shapes") {
    auto rng = make_rng(5);
    std::uniform_int_distribution<int> rank_pick(0, 4);
    std::uniform_int_distribution<uint64_t> dim_pick(1, 6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<uint64_t> dims(rank_pick(rng));
        for (auto& d : dims) d = dim_pick(rng);
        TempFile f("roundtrip_" + std::to_string(trial) + ".vp2p");
        Tensor t = random_tensor(dims, 100 + trial);
        write_tensor(f.path, t);
        Tensor back = read_tensor(f.path);
        CHECK(back.dims == t.dims);
        CHECK(back.data == t.data);
    }
}

TEST_CASE("tensor reader distinguishes its failure modes") {
    TempFile f("bad_tensor.vp2p");
    Tensor t = random_tensor({2, 3}, 1);
    write_tensor(f.path, t);

    SUBCASE("bad magic") {
        corrupt_byte(f.path, 0, 'X');
        CHECK_THROWS_WITH_AS(read_tensor(f.path), doctest::Contains("bad magic"),
                             std::runtime_error);
    }
    SUBCASE("truncated payload") {
        std::ifstream in(f.path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();
        std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
        out.close();
        CHECK_THROWS_WITH_AS(read_tensor(f.path), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    SUBCASE("trailing bytes") {
        std::ofstream out(f.path, std::ios::binary | std::ios::app);
        out.put('z');
        out.close();
        CHECK_THROWS_WITH_AS(read_tensor(f.path), doctest::Contains("trailing"),
                             std::runtime_error);
    }
    SUBCASE("implausible rank") {
        corrupt_byte(f.path, 8, 99);  // rank field follows magic + version
        CHECK_THROWS_WITH_AS(read_tensor(f.path), doctest::Contains("rank"), std::runtime_error);
    }
    SUBCASE("missing file") { CHECK_THROWS(read_tensor("does_not_exist.vp2p")); }
}

TEST_CASE("model checkpoints restore dims, seed, and parameters") {
    ModelDims d;
    d.channels = 2;
    d.hidden = 8;
    d.text_dim = 8;
    d.temporal = true;
    d.max_timestep = 50;
    auto m = init_toy_t2s(17, d);
    TempFile f("model.vp2m");
    write_model(f.path, m);
    auto back = read_model(f.path);
    CHECK(back.params == m.params);
    CHECK(back.seed == m.seed);
    CHECK(back.dims.channels == d.channels);
    CHECK(back.dims.hidden == d.hidden);
    CHECK(back.dims.text_dim == d.text_dim);
    CHECK(back.dims.temporal == d.temporal);
    CHECK(back.dims.max_timestep == d.max_timestep);
    CHECK(back.layout.total == m.layout.total);

    corrupt_byte(f.path, 0, 'Q');
    CHECK_THROWS(read_model(f.path));
}

TEST_CASE("null schedules round-trip in both modes") {
    for (auto mode : {NullSchedule::Mode::Shared, NullSchedule::Mode::PerFrame}) {
        NullSchedule n;
        n.mode = mode;
        n.num_steps = 4;
        const int slots = mode == NullSchedule::Mode::Shared ? 1 : 3;
        auto rng = make_rng(23);
        n.embeddings.assign(4, std::vector<PromptEmbedding>(slots));
        for (auto& step : n.embeddings)
            for (auto& e : step) {
                e.resize(3, 5);
                fill_gaussian(rng, e.data(), static_cast<size_t>(e.size()));
            }
        TempFile f("nulls.vp2n");
        write_nulls(f.path, n);
        auto back = read_nulls(f.path);
        CHECK(back.mode == n.mode);
        CHECK(back.num_steps == n.num_steps);
        REQUIRE(back.embeddings.size() == 4);
        for (int t = 0; t < 4; ++t) {
            REQUIRE(static_cast<int>(back.embeddings[t].size()) == slots);
            for (int s = 0; s < slots; ++s) CHECK(back.embeddings[t][s] == n.embeddings[t][s]);
        }
    }
}

TEST_CASE("config parsing: types, comments, duplicate and unknown keys") {
    auto cfg = Config::parse_string(
        "# a comment line\n"
        "seed = 42\n"
        "lr=1e-3  # trailing comment\n"
        "name = ref scene\n"
        "temporal = true\n"
        "decoupled=off\n"
        "\n");
    CHECK(cfg.get_int("seed", 0) == 42);
    CHECK(cfg.get_real("lr", 0.0) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(cfg.get_string("name", "") == "ref scene");
    CHECK(cfg.get_bool("temporal", false));
    CHECK(!cfg.get_bool("decoupled", true));
    CHECK(cfg.get_int("missing", 7) == 7);
    CHECK(cfg.has("seed"));
    CHECK(!cfg.has("missing"));
    CHECK_NOTHROW(cfg.reject_unknown_keys());

    auto strict = Config::parse_string("known = 1\nstray = 2\n");
    strict.get_int("known", 0);
    CHECK_THROWS_WITH_AS(strict.reject_unknown_keys(), doctest::Contains("stray"),
                         std::runtime_error);

    CHECK_THROWS(Config::parse_string("a = 1\na = 2\n"));       // duplicate key
    CHECK_THROWS(Config::parse_string("just some words\n"));    // not key=value
    CHECK_THROWS(Config::parse_string("= 3\n"));                // empty key

    auto typed = Config::parse_string("n = 3.5\nx = abc\nb = maybe\n");
    CHECK_THROWS(typed.get_int("n", 0));
    CHECK_THROWS(typed.get_real("x", 0.0));
    CHECK_THROWS(typed.get_bool("b", false));
}

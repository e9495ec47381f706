#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sparse/npz.hpp"

namespace fs = std::filesystem;
using namespace sparse::npz;

namespace {

fs::path fixture(const char* name) { return fs::path(SPARSE_TEST_DATA) / name; }

fs::path scratch(const char* name) {
    fs::path dir = fs::temp_directory_path() / "sparse_npz_test";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Npz, ReadsNumpyCompressedArchive) {
    Archive a = load(fixture("numpy_mixed.npz"));
    ASSERT_EQ(a.size(), 6u);

    const Array& f32 = a.at("f32");
    EXPECT_EQ(f32.dtype, DType::f32);
    EXPECT_EQ(f32.shape, (std::vector<std::int64_t>{2, 3}));
    auto v = f32.to_double();
    for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(v[i], i / 4.0);

    auto lin = a.at("f64").to_double();
    ASSERT_EQ(lin.size(), 5u);
    EXPECT_DOUBLE_EQ(lin[0], -1.0);
    EXPECT_DOUBLE_EQ(lin[2], 0.0);
    EXPECT_DOUBLE_EQ(lin[4], 1.0);

    auto big = a.at("i64").to_int64();
    EXPECT_EQ(big, (std::vector<std::int64_t>{-3, 0, 7, std::int64_t{1} << 40}));

    const Array& u8 = a.at("u8");
    EXPECT_EQ(u8.shape, (std::vector<std::int64_t>{2, 2, 2}));
    EXPECT_EQ(u8.to_int64()[7], 7);

    EXPECT_EQ(a.at("flags").to_int64(), (std::vector<std::int64_t>{1, 0, 1}));
    EXPECT_EQ(a.at("i32").to_int64(), (std::vector<std::int64_t>{1, -2, 3, -4}));
}

TEST(Npz, ReadsNumpyStoredArchive) {
    Archive a = load(fixture("numpy_stored.npz"));
    auto v = a.at("a").to_double();
    ASSERT_EQ(v.size(), 10u);
    EXPECT_DOUBLE_EQ(v[9], 9.0);
    EXPECT_EQ(a.at("b").dtype, DType::i16);
    EXPECT_EQ(a.at("b").to_int64()[0], 5);
}

TEST(Npz, RoundTrip) {
    Archive a;
    std::vector<double> d{1.5, -2.25, 3e-300, 0.0};
    std::vector<std::int64_t> ids{4, -9};
    a["weights"] = Array::from_double({2, 2}, d);
    a["ids"] = Array::from_int64({2}, ids);
    a["__arch__"] = Array::from_text("channels=1 depth=3");
    a["empty"] = Array::from_double({0}, {});
    for (bool compress : {true, false}) {
        fs::path p = scratch(compress ? "rt_c.npz" : "rt_s.npz");
        save(p, a, compress);
        Archive b = load(p);
        EXPECT_EQ(b.at("weights").to_double(), d);
        EXPECT_EQ(b.at("weights").shape, (std::vector<std::int64_t>{2, 2}));
        EXPECT_EQ(b.at("ids").to_int64(), ids);
        EXPECT_EQ(b.at("__arch__").to_text(), "channels=1 depth=3");
        EXPECT_EQ(b.at("empty").numel(), 0);
    }
}

TEST(Npz, RejectsGarbage) {
    fs::path p = scratch("garbage.npz");
    std::ofstream(p) << "definitely not a zip archive";
    EXPECT_THROW(load(p), NpzError);
    EXPECT_THROW(load(scratch("missing.npz")), NpzError);
}

TEST(Npz, NpyHeaderIsAligned) {
    auto blob = serialize_npy(Array::from_double({3}, std::vector<double>{1, 2, 3}));
    const std::size_t header_len = blob[8] | (blob[9] << 8);
    EXPECT_EQ((10 + header_len) % 64, 0u);
    EXPECT_EQ(parse_npy(blob).to_double(), (std::vector<double>{1, 2, 3}));
}

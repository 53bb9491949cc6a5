#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "data.hpp"

using namespace arcvq;

namespace {

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("hand-built 2-image 4x4 IDX fixture parses byte-for-byte") {
    // Image file: magic 0x00000803, dims [2,4,4], then 32 pixel bytes.
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(2));
    append(img, be32(4));
    append(img, be32(4));
    for (int i = 0; i < 16; ++i) img.push_back(static_cast<unsigned char>(i * 17));  // 0..255
    for (int i = 0; i < 16; ++i) img.push_back(static_cast<unsigned char>(255 - i));
    write_bytes("fixture-images.idx3-ubyte", img);

    std::vector<unsigned char> lbl;
    append(lbl, be32(0x00000801));
    append(lbl, be32(2));
    lbl.push_back(7);
    lbl.push_back(3);
    write_bytes("fixture-labels.idx1-ubyte", lbl);

    const Dataset ds = load_idx("fixture-images.idx3-ubyte", std::string("fixture-labels.idx1-ubyte"));
    REQUIRE(ds.count() == 2);
    REQUIRE(ds.side() == 4);
    for (int i = 0; i < 16; ++i)
        CHECK(ds.images[static_cast<std::size_t>(i)] == doctest::Approx(i * 17 / 255.0).epsilon(1e-15));
    CHECK(ds.images[0] == 0.0);           // byte 0 -> 0.0
    CHECK(ds.images[15] == 1.0);          // byte 255 -> 1.0
    CHECK(ds.images[16] == 1.0);          // first pixel of image 2
    REQUIRE(ds.labels.size() == 2);
    CHECK(ds.labels[0] == 7);
    CHECK(ds.labels[1] == 3);

    std::filesystem::remove("fixture-images.idx3-ubyte");
    std::filesystem::remove("fixture-labels.idx1-ubyte");
}

TEST_CASE("wrong magic is a format error") {
    std::vector<unsigned char> img;
    append(img, be32(0x00000804));
    append(img, be32(1));
    append(img, be32(2));
    append(img, be32(2));
    for (int i = 0; i < 4; ++i) img.push_back(0);
    write_bytes("badmagic.idx", img);
    CHECK_THROWS_AS(load_idx("badmagic.idx"), FormatError);
    std::filesystem::remove("badmagic.idx");
}

TEST_CASE("truncated payload is an io error") {
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(2));
    append(img, be32(4));
    append(img, be32(4));
    for (int i = 0; i < 20; ++i) img.push_back(1);  // 32 expected
    write_bytes("trunc.idx", img);
    CHECK_THROWS_AS(load_idx("trunc.idx"), IoError);
    std::filesystem::remove("trunc.idx");
}

TEST_CASE("label/image count mismatch is a format error") {
    std::vector<unsigned char> img;
    append(img, be32(0x00000803));
    append(img, be32(1));
    append(img, be32(2));
    append(img, be32(2));
    for (int i = 0; i < 4; ++i) img.push_back(9);
    write_bytes("mm-images.idx", img);
    std::vector<unsigned char> lbl;
    append(lbl, be32(0x00000801));
    append(lbl, be32(3));
    for (int i = 0; i < 3; ++i) lbl.push_back(0);
    write_bytes("mm-labels.idx", lbl);
    CHECK_THROWS_AS(load_idx("mm-images.idx", std::string("mm-labels.idx")), FormatError);
    std::filesystem::remove("mm-images.idx");
    std::filesystem::remove("mm-labels.idx");
}

TEST_CASE("missing file is an io error") {
    CHECK_THROWS_AS(load_idx("does-not-exist.idx"), IoError);
}

TEST_CASE("write/load round trip is bit-exact") {
    const Dataset ds = synth_dataset(37, 12, 5, 99);
    write_idx(ds, "rt-images.idx", std::string("rt-labels.idx"));
    const Dataset back = load_idx("rt-images.idx", std::string("rt-labels.idx"));
    REQUIRE(back.count() == ds.count());
    REQUIRE(back.side() == ds.side());
    for (std::size_t i = 0; i < ds.images.size(); ++i) CHECK(back.images[i] == ds.images[i]);
    CHECK(back.labels == ds.labels);
    std::filesystem::remove("rt-images.idx");
    std::filesystem::remove("rt-labels.idx");
}

TEST_CASE("synth determinism and round-robin assignment") {
    const Dataset a = synth_dataset(400, 8, 4, 5);
    const Dataset b = synth_dataset(400, 8, 4, 5);
    for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);

    std::vector<int> counts(4, 0);
    for (auto l : a.labels) ++counts[l];
    for (int c : counts) CHECK(c == 100);

    for (std::size_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i] >= 0.0);
        CHECK(a.images[i] <= 1.0);
    }
}

TEST_CASE("one cluster with zero noise makes identical images") {
    const Dataset ds = synth_dataset(5, 10, 1, 3, 0.0);
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t p = 0; p < 100; ++p)
            CHECK(ds.images[i * 100 + p] == ds.images[p]);
}

TEST_CASE("different clusters look different") {
    const Dataset ds = synth_dataset(2, 16, 2, 1, 0.0);
    bool differs = false;
    for (std::size_t p = 0; p < 256; ++p)
        if (ds.images[p] != ds.images[256 + p]) differs = true;
    CHECK(differs);
}

}  // TEST_SUITE

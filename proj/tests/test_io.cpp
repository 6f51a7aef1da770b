#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "bandsel/error.hpp"
#include "bandsel/io.hpp"
#include "oracles.hpp"

using namespace bandsel;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Hsc, RoundTripIsBitExact) {
    oracle::TempDir dir("hsc");
    const auto axis = WavelengthAxis({450.0, 451.5, 700.25, 849.0});
    Hypercube cube(3, 5, axis, CubeKind::RawIntensity);
    oracle::Gen gen(1);
    for (auto& v : cube.data()) v = static_cast<float>(gen.uniform(-10.0, 4000.0));
    cube.at(2, 4, 3) = -0.0f;

    write_hsc(cube, dir / "c.hsc");
    const auto back = read_hsc(dir / "c.hsc");
    EXPECT_EQ(back.kind(), CubeKind::RawIntensity);
    EXPECT_TRUE(back.same_geometry(cube));
    ASSERT_EQ(back.data().size(), cube.data().size());
    EXPECT_EQ(std::memcmp(back.data().data(), cube.data().data(), cube.data().size() * sizeof(float)), 0);
}

TEST(Hsc, StorageOnDiskIsBandSequential) {
    oracle::TempDir dir("hsc-bsq");
    const auto axis = WavelengthAxis({500.0, 600.0});
    Hypercube cube(1, 2, axis, CubeKind::Reflectance);
    cube.at(0, 0, 0) = 1.0f;
    cube.at(0, 1, 0) = 2.0f;
    cube.at(0, 0, 1) = 3.0f;
    cube.at(0, 1, 1) = 4.0f;
    write_hsc(cube, dir / "c.hsc");
    const auto bytes = slurp(dir / "c.hsc");
    ASSERT_GE(bytes.size(), 16u);
    float tail[4];
    std::memcpy(tail, bytes.data() + bytes.size() - 16, 16);
    EXPECT_EQ(tail[0], 1.0f);
    EXPECT_EQ(tail[1], 2.0f);
    EXPECT_EQ(tail[2], 3.0f);
    EXPECT_EQ(tail[3], 4.0f);
}

TEST(Hsc, MalformedFilesAreIoErrors) {
    oracle::TempDir dir("hsc-bad");
    EXPECT_THROW(read_hsc(dir / "missing.hsc"), IoError);
    {
        std::ofstream(dir / "bad.hsc") << "NOPE 1 1 1 raw\n500\n";
    }
    EXPECT_THROW(read_hsc(dir / "bad.hsc"), IoError);
    {
        std::ofstream(dir / "short.hsc") << "HSC1 2 2 1 raw\n500\nabc";
    }
    EXPECT_THROW(read_hsc(dir / "short.hsc"), IoError);
    {
        std::ofstream(dir / "bands.hsc") << "HSC1 1 1 2 raw\n500\n";
    }
    EXPECT_THROW(read_hsc(dir / "bands.hsc"), IoError);
}

TEST(SpectraCsv, RoundTrip) {
    oracle::TempDir dir("csv");
    SpectraTable t{WavelengthAxis({450.0, 500.5, 850.0}), {{"Green", {0.1, 0.2, 1.0 / 3.0}}, {"Red", {1e-17, -0.5, 2.0}}}};
    write_spectra_csv(t, dir / "s.csv");
    const auto back = read_spectra_csv(dir / "s.csv");
    EXPECT_EQ(back.axis, t.axis);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].label, "Red");
    for (std::size_t r = 0; r < 2; ++r) EXPECT_EQ(back.rows[r].values, t.rows[r].values);
}

TEST(SpectraCsv, RejectsRaggedRows) {
    oracle::TempDir dir("csv-bad");
    std::ofstream(dir / "s.csv") << "label,500,600\nGreen,0.1\n";
    EXPECT_THROW(read_spectra_csv(dir / "s.csv"), IoError);
    std::ofstream(dir / "e.csv") << "";
    EXPECT_THROW(read_spectra_csv(dir / "e.csv"), IoError);
}

TEST(AxisFile, AcceptsCommasAndWhitespace) {
    oracle::TempDir dir("axis");
    std::ofstream(dir / "a.txt") << "450, 460\n470\t480\n";
    const auto axis = read_axis_file(dir / "a.txt");
    EXPECT_EQ(axis, WavelengthAxis({450.0, 460.0, 470.0, 480.0}));
    write_axis_file(axis, dir / "b.txt");
    EXPECT_EQ(read_axis_file(dir / "b.txt"), axis);
}

TEST(FormatDouble, ShortestRoundTrip) {
    oracle::Gen gen(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = gen.uniform(-1e6, 1e6) * std::pow(10.0, gen.uniform(-20, 5));
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(510.0), "510");
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Pgm, RoundTrip) {
    oracle::TempDir dir("pgm");
    const std::vector<std::uint8_t> px = {0, 1, 2, 255, 7, 0};
    write_pgm(dir / "m.pgm", 2, 3, px);
    std::size_t h = 0, w = 0;
    EXPECT_EQ(read_pgm(dir / "m.pgm", h, w), px);
    EXPECT_EQ(h, 2u);
    EXPECT_EQ(w, 3u);
    EXPECT_THROW(write_pgm(dir / "x.pgm", 2, 2, px), ShapeError);
}

TEST(PalettePng, StableBytesAndBlackBackground) {
    oracle::TempDir dir("png");
    EXPECT_EQ(class_palette().front().r, 0);
    EXPECT_EQ(class_palette().front().g, 0);
    EXPECT_EQ(class_palette().front().b, 0);
    EXPECT_GE(class_palette().size(), 8u);

    const std::vector<std::uint8_t> idx = {0, 1, 2, 3, 4, 5, 6, 7, 9};
    write_palette_png(dir / "a.png", 3, 3, idx);
    write_palette_png(dir / "b.png", 3, 3, idx);
    const auto a = slurp(dir / "a.png");
    ASSERT_GT(a.size(), 8u);
    EXPECT_EQ(a.substr(1, 3), "PNG");
    EXPECT_EQ(a, slurp(dir / "b.png"));
}

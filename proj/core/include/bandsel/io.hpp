#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bandsel/spectral.hpp"

namespace bandsel {

// HSC v1 cube container:
//   line 1: "HSC1 <H> <W> <B> <kind>"   kind = raw | reflectance
//   line 2: B wavelengths in nm, space separated
//   then H*W*B little-endian float32, band-sequential (all of band 0 first).
Hypercube read_hsc(const std::filesystem::path& path);
void write_hsc(const Hypercube& cube, const std::filesystem::path& path);

struct LabeledRow {
    std::string label;
    std::vector<double> values;
};

/// Per-instance spectra table: header "label,<nm1>,<nm2>,...", one row per instance.
struct SpectraTable {
    WavelengthAxis axis;
    std::vector<LabeledRow> rows;
};

SpectraTable read_spectra_csv(const std::filesystem::path& path);
void write_spectra_csv(const SpectraTable& table, const std::filesystem::path& path);

/// Axis file: wavelengths in nm separated by whitespace or commas.
WavelengthAxis read_axis_file(const std::filesystem::path& path);
void write_axis_file(const WavelengthAxis& axis, const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// 8-bit binary PGM (P5).
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

struct Rgb {
    std::uint8_t r, g, b;
};

/// Fixed class-map palette; index 0 (background) is black. Indices beyond the
/// palette wrap around entries 1..7.
const std::vector<Rgb>& class_palette();

/// Indexed image written as 8-bit RGB PNG through the palette.
void write_palette_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& indices);

}  // namespace bandsel

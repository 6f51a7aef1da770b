#include "bandsel/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <png.h>

#include "bandsel/error.hpp"

namespace bandsel {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

double parse_double(std::string_view text, const std::string& context) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw IoError("malformed number '" + std::string(text) + "' in " + context);
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

float load_le_float(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

void store_le_float(float f, unsigned char* p) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    p[0] = static_cast<unsigned char>(u);
    p[1] = static_cast<unsigned char>(u >> 8);
    p[2] = static_cast<unsigned char>(u >> 16);
    p[3] = static_cast<unsigned char>(u >> 24);
}

}  // namespace

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

// ---------------------------------------------------------------------------
// HSC v1
// ---------------------------------------------------------------------------

Hypercube read_hsc(const fs::path& path) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    std::string header;
    std::getline(in, header);
    strip_cr(header);
    std::istringstream hs(header);
    std::string magic, kind_text;
    std::size_t h = 0, w = 0, b = 0;
    if (!(hs >> magic >> h >> w >> b >> kind_text) || magic != "HSC1")
        throw IoError(path.string() + ": not an HSC v1 file");
    CubeKind kind;
    if (kind_text == "raw")
        kind = CubeKind::RawIntensity;
    else if (kind_text == "reflectance")
        kind = CubeKind::Reflectance;
    else
        throw IoError(path.string() + ": unknown cube kind '" + kind_text + "'");

    std::string axis_line;
    std::getline(in, axis_line);
    std::istringstream as(axis_line);
    std::vector<double> nm;
    std::string tok;
    while (as >> tok) nm.push_back(parse_double(tok, path.string()));
    if (nm.size() != b) throw IoError(path.string() + ": header declares " + std::to_string(b) + " bands but lists " + std::to_string(nm.size()) + " wavelengths");
    WavelengthAxis axis(std::move(nm));

    const std::size_t pixels = h * w;
    std::vector<unsigned char> raw(pixels * b * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(path.string() + ": truncated voxel data");

    std::vector<float> bip(pixels * b);
    for (std::size_t band = 0; band < b; ++band)
        for (std::size_t p = 0; p < pixels; ++p) bip[p * b + band] = load_le_float(&raw[(band * pixels + p) * 4]);
    return Hypercube(h, w, std::move(axis), kind, std::move(bip));
}

void write_hsc(const Hypercube& cube, const fs::path& path) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "HSC1 " << cube.height() << ' ' << cube.width() << ' ' << cube.bands() << ' '
        << (cube.kind() == CubeKind::RawIntensity ? "raw" : "reflectance") << '\n';
    const auto nm = cube.axis().nm();
    for (std::size_t i = 0; i < nm.size(); ++i) out << (i ? " " : "") << format_double(nm[i]);
    out << '\n';

    const std::size_t pixels = cube.pixel_count();
    const std::size_t bands = cube.bands();
    std::vector<unsigned char> buf(pixels * 4);
    for (std::size_t band = 0; band < bands; ++band) {
        for (std::size_t p = 0; p < pixels; ++p) store_le_float(cube.pixel(p)[band], &buf[p * 4]);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// CSV spectra and axis files
// ---------------------------------------------------------------------------

SpectraTable read_spectra_csv(const fs::path& path) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty spectra file");
    strip_cr(line);
    const auto head = split(line, ',');
    if (head.size() < 2 || head[0] != "label") throw IoError(path.string() + ": header must be 'label,<nm>,...'");
    std::vector<double> nm;
    for (std::size_t i = 1; i < head.size(); ++i) nm.push_back(parse_double(head[i], path.string() + " header"));

    SpectraTable table{WavelengthAxis(std::move(nm)), {}};
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != head.size())
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(head.size()) + " columns");
        LabeledRow row{std::string(cells[0]), {}};
        row.values.reserve(cells.size() - 1);
        for (std::size_t i = 1; i < cells.size(); ++i)
            row.values.push_back(parse_double(cells[i], path.string() + ":" + std::to_string(line_no)));
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_spectra_csv(const SpectraTable& table, const fs::path& path) {
    auto out = open_out(path);
    out << "label";
    for (double nm : table.axis.nm()) out << ',' << format_double(nm);
    out << '\n';
    for (const auto& row : table.rows) {
        if (row.values.size() != table.axis.size()) throw ShapeError("spectra row length differs from the axis");
        out << row.label;
        for (double v : row.values) out << ',' << format_double(v);
        out << '\n';
    }
}

WavelengthAxis read_axis_file(const fs::path& path) {
    auto in = open_in(path);
    std::vector<double> nm;
    std::string tok;
    while (in >> tok) {
        for (auto part : split(tok, ','))
            if (!part.empty()) nm.push_back(parse_double(part, path.string()));
    }
    if (nm.empty()) throw IoError(path.string() + ": no wavelengths");
    return WavelengthAxis(std::move(nm));
}

void write_axis_file(const WavelengthAxis& axis, const fs::path& path) {
    auto out = open_out(path);
    const auto nm = axis.nm();
    for (std::size_t i = 0; i < nm.size(); ++i) out << (i ? " " : "") << format_double(nm[i]);
    out << '\n';
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

void write_pgm(const fs::path& path, std::size_t height, std::size_t width, const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != height * width) throw ShapeError("PGM pixel count mismatch");
    auto out = open_out(path, std::ios::out | std::ios::binary);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_pgm(const fs::path& path, std::size_t& height, std::size_t& width) {
    auto in = open_in(path, std::ios::in | std::ios::binary);
    std::string magic;
    std::size_t maxval = 0;
    if (!(in >> magic >> width >> height >> maxval) || magic != "P5" || maxval != 255)
        throw IoError(path.string() + ": not an 8-bit P5 PGM");
    in.get();
    std::vector<std::uint8_t> px(height * width);
    in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (static_cast<std::size_t>(in.gcount()) != px.size()) throw IoError(path.string() + ": truncated PGM");
    return px;
}

const std::vector<Rgb>& class_palette() {
    static const std::vector<Rgb> palette = {
        {0, 0, 0},        // background
        {46, 139, 87},    // green
        {240, 240, 220},  // white
        {255, 182, 193},  // pink
        {255, 105, 180},  // late pink / breaker
        {230, 30, 30},    // red
        {150, 0, 30},     // late red
        {90, 20, 60},     // overripe
    };
    return palette;
}

void write_palette_png(const fs::path& path, std::size_t height, std::size_t width,
                       const std::vector<std::uint8_t>& indices) {
    if (indices.size() != height * width) throw ShapeError("PNG pixel count mismatch");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw IoError("cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const auto& pal = class_palette();
    std::vector<png_byte> row(width * 3);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t idx = indices[y * width + x];
            const Rgb c = idx == 0 ? pal[0] : pal[1 + (idx - 1) % (pal.size() - 1)];
            row[x * 3 + 0] = c.r;
            row[x * 3 + 1] = c.g;
            row[x * 3 + 2] = c.b;
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace bandsel

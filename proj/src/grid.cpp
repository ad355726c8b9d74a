#include "c2d/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "c2d/errors.hpp"

namespace c2d {

Grid2D::Grid2D(int w, int h, float fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw ParamError("Grid2D: width and height must be >= 1");
    values.assign(static_cast<size_t>(w) * h, fill);
}

bool Grid2D::all_finite() const {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

float Grid2D::max_value() const {
    float m = values.empty() ? 0.0f : values[0];
    for (float v : values) m = std::max(m, v);
    return m;
}

double integrate(const Grid2D& map) {
    double sum = 0.0;
    for (int v = 0; v < map.height; ++v) {
        for (int u = 0; u < map.width; ++u) {
            sum += map.at(u, v);
        }
    }
    return sum;
}

double subregion_count(const Grid2D& map, const Rect& region) {
    if (region.width < 0 || region.height < 0 || region.u0 < 0 || region.v0 < 0 ||
        region.u0 + region.width > map.width || region.v0 + region.height > map.height) {
        throw BoundsError("subregion_count: rect (" + std::to_string(region.u0) + "," +
                          std::to_string(region.v0) + " " + std::to_string(region.width) + "x" +
                          std::to_string(region.height) + ") outside " +
                          std::to_string(map.width) + "x" + std::to_string(map.height) + " map");
    }
    double sum = 0.0;
    for (int v = region.v0; v < region.v0 + region.height; ++v) {
        for (int u = region.u0; u < region.u0 + region.width; ++u) {
            sum += map.at(u, v);
        }
    }
    return sum;
}

Grid2D normalize_max(const Grid2D& map) {
    Grid2D out = map;
    const float m = map.max_value();
    if (m <= 0.0f) return out; // all-zero stays all-zero
    for (float& v : out.values) v /= m;
    return out;
}

int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

Grid2D gaussian_blur(const Grid2D& map, double sigma) {
    if (!(sigma > 0.0)) throw ParamError("gaussian_blur: sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;

    const int w = map.width, h = map.height;
    // Horizontal pass in double, then vertical.
    std::vector<double> tmp(static_cast<size_t>(w) * h);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                acc += kernel[k + radius] * map.at(reflect_index(u + k, w), v);
            }
            tmp[static_cast<size_t>(v) * w + u] = acc;
        }
    }
    Grid2D out(w, h);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                acc += kernel[k + radius] * tmp[static_cast<size_t>(reflect_index(v + k, h)) * w + u];
            }
            out.at(u, v) = static_cast<float>(acc);
        }
    }
    return out;
}

Grid2D threshold_binarize(const Grid2D& map, double t) {
    // Compare at storage precision so a pixel equal to the threshold stays 0.
    const float tf = static_cast<float>(t);
    Grid2D out(map.width, map.height);
    for (size_t i = 0; i < map.values.size(); ++i) {
        out.values[i] = map.values[i] > tf ? 1.0f : 0.0f;
    }
    return out;
}

namespace {

constexpr char kGridMagic[4] = {'C', '2', 'D', 'G'};
constexpr uint32_t kGridVersion = 1;

void write_u32_le(std::ostream& os, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::istream& is, const char* field) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(std::string("c2dg: truncated ") + field);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& os, float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    write_u32_le(os, x);
}

} // namespace

void save_c2dg(const Grid2D& map, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("c2dg: cannot open for writing: " + path.string());
    os.write(kGridMagic, 4);
    write_u32_le(os, kGridVersion);
    write_u32_le(os, static_cast<uint32_t>(map.height));
    write_u32_le(os, static_cast<uint32_t>(map.width));
    for (float v : map.values) write_f32_le(os, v);
    if (!os) throw FormatError("c2dg: write failed: " + path.string());
}

Grid2D load_c2dg(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("c2dg: cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kGridMagic, 4) != 0) {
        throw FormatError("c2dg: bad magic in " + path.string());
    }
    const uint32_t version = read_u32_le(is, "version");
    if (version != kGridVersion) {
        throw FormatError("c2dg: unsupported version " + std::to_string(version) + " in " +
                          path.string());
    }
    const uint32_t h = read_u32_le(is, "height");
    const uint32_t w = read_u32_le(is, "width");
    if (h == 0 || w == 0 || static_cast<uint64_t>(h) * w > (1ULL << 30)) {
        throw FormatError("c2dg: bad shape " + std::to_string(h) + "x" + std::to_string(w) +
                          " in " + path.string());
    }
    Grid2D map(static_cast<int>(w), static_cast<int>(h));
    for (size_t i = 0; i < map.values.size(); ++i) {
        uint32_t x = read_u32_le(is, "payload");
        std::memcpy(&map.values[i], &x, 4);
    }
    return map;
}

void save_pgm16(const Grid2D& map, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("pgm: cannot open for writing: " + path.string());
    os << "P5\n" << map.width << " " << map.height << "\n65535\n";
    const float m = map.max_value();
    const double scale = m > 0.0f ? 65535.0 / m : 0.0;
    for (int v = 0; v < map.height; ++v) {
        for (int u = 0; u < map.width; ++u) {
            double s = map.at(u, v) * scale;
            s = std::clamp(s, 0.0, 65535.0);
            const uint16_t q = static_cast<uint16_t>(std::lround(s));
            // PGM samples are big-endian
            const unsigned char b[2] = {static_cast<unsigned char>(q >> 8),
                                        static_cast<unsigned char>(q & 0xff)};
            os.write(reinterpret_cast<const char*>(b), 2);
        }
    }
    if (!os) throw FormatError("pgm: write failed: " + path.string());
}

namespace {

// Reads next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& is, const std::filesystem::path& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("pgm: truncated header in " + path.string());
    return tok;
}

long pgm_int(std::istream& is, const std::filesystem::path& path, const char* field) {
    const std::string tok = pgm_token(is, path);
    try {
        size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("pgm: bad ") + field + " '" + tok + "' in " + path.string());
    }
}

} // namespace

Grid2D load_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("pgm: cannot open: " + path.string());
    const std::string magic = pgm_token(is, path);
    if (magic != "P2" && magic != "P5") {
        throw FormatError("pgm: bad magic '" + magic + "' in " + path.string());
    }
    const long w = pgm_int(is, path, "width");
    const long h = pgm_int(is, path, "height");
    const long maxval = pgm_int(is, path, "maxval");
    if (w < 1 || h < 1) throw FormatError("pgm: bad shape in " + path.string());
    if (maxval < 1 || maxval > 65535) {
        throw FormatError("pgm: bad maxval " + std::to_string(maxval) + " in " + path.string());
    }
    Grid2D map(static_cast<int>(w), static_cast<int>(h));
    if (magic == "P2") {
        for (size_t i = 0; i < map.values.size(); ++i) {
            const long v = pgm_int(is, path, "payload");
            if (v < 0 || v > maxval) throw FormatError("pgm: sample out of range in " + path.string());
            map.values[i] = static_cast<float>(v);
        }
    } else {
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> buf(map.values.size() * bytes);
        if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
            throw FormatError("pgm: truncated payload in " + path.string());
        }
        for (size_t i = 0; i < map.values.size(); ++i) {
            const unsigned v = bytes == 2
                                   ? (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1]
                                   : buf[i];
            map.values[i] = static_cast<float>(v);
        }
    }
    return map;
}

} // namespace c2d

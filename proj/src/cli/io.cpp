#include "optflow/cli/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace optflow::cli {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kVectorBytes = 12;
constexpr std::size_t kTrailerBytes = 4 + 6 * 8;

[[noreturn]] void io_error(const fs::path& path, const std::string& what) {
    throw Error(ErrorCode::Io, path.string() + ": " + what);
}

std::vector<unsigned char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_error(path, "cannot open for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) io_error(path, "read failed");
    return bytes;
}

void spill(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_error(path, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) io_error(path, "write failed");
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_vectors(std::string& out, const std::vector<Vec3>& values) {
    for (const auto& v : values) {
        for (int c = 0; c < 3; ++c) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v[c])));
    }
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4))); }
double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le(p, 8)); }

bool has_magic(const std::vector<unsigned char>& bytes, const char (&magic)[4], std::size_t at = 0) {
    return bytes.size() >= at + 4 && std::memcmp(bytes.data() + at, magic, 4) == 0;
}

// Header check shared by both binary kinds; returns the declared count.
std::uint64_t read_header(const fs::path& path, const std::vector<unsigned char>& bytes, const char (&magic)[4]) {
    if (!has_magic(bytes, magic)) io_error(path, std::string("missing ") + std::string(magic, 4) + " magic");
    if (bytes.size() < kHeaderBytes) io_error(path, "truncated header");
    const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
    if (version != kFormatVersion) io_error(path, "unsupported format version " + std::to_string(version));
    const std::uint64_t count = get_le(bytes.data() + 8, 8);
    if (count > (bytes.size() - kHeaderBytes) / kVectorBytes) {
        io_error(path, "declares " + std::to_string(count) + " vectors but the payload is shorter");
    }
    return count;
}

std::vector<Vec3> read_vectors(const std::vector<unsigned char>& bytes, std::uint64_t count) {
    std::vector<Vec3> out(count);
    const unsigned char* p = bytes.data() + kHeaderBytes;
    for (std::uint64_t i = 0; i < count; ++i, p += kVectorBytes) {
        out[i] = Vec3(get_f32(p), get_f32(p + 4), get_f32(p + 8));
    }
    return out;
}

std::string header(const char (&magic)[4], std::size_t count) {
    std::string out(magic, 4);
    put_u32(out, kFormatVersion);
    put_u64(out, count);
    return out;
}

bool is_xyz(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".xyz";
}

PointCloud parse_xyz(const fs::path& path, const std::vector<unsigned char>& bytes) {
    const std::string text(bytes.begin(), bytes.end());
    PointCloud cloud;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);

        double xyz[3];
        int found = 0;
        const char* p = line.data();
        const char* stop = line.data() + line.size();
        while (true) {
            while (p < stop && std::isspace(static_cast<unsigned char>(*p))) ++p;
            if (p == stop) break;
            if (found == 3) io_error(path, "line " + std::to_string(line_no) + ": more than three values");
            // from_chars rejects a leading '+', which strtod-style input allows.
            if (*p == '+') ++p;
            const auto [next, ec] = std::from_chars(p, stop, xyz[found]);
            if (ec != std::errc() || (next < stop && !std::isspace(static_cast<unsigned char>(*next)))) {
                io_error(path, "line " + std::to_string(line_no) + ": not a number");
            }
            ++found;
            p = next;
        }
        if (found == 0) continue;
        if (found != 3) io_error(path, "line " + std::to_string(line_no) + ": expected three values");
        cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
    return cloud;
}

}  // namespace

PointCloud read_cloud(const fs::path& path) {
    const auto bytes = slurp(path);
    PointCloud cloud;
    if (has_magic(bytes, kCloudMagic)) {
        const std::uint64_t count = read_header(path, bytes, kCloudMagic);
        if (bytes.size() != kHeaderBytes + count * kVectorBytes) io_error(path, "unexpected trailing bytes");
        cloud.points = read_vectors(bytes, count);
    } else if (is_xyz(path)) {
        cloud = parse_xyz(path, bytes);
    } else {
        io_error(path, "not a cloud file (no OFPC magic and no .xyz extension)");
    }
    require_finite(cloud.view(), path.string());
    return cloud;
}

void write_cloud(const fs::path& path, const PointCloud& cloud) {
    std::string out = header(kCloudMagic, cloud.size());
    put_vectors(out, cloud.points);
    spill(path, out);
}

FlowFileData read_flow(const fs::path& path) {
    const auto bytes = slurp(path);
    const std::uint64_t count = read_header(path, bytes, kFlowMagic);
    const std::size_t body = kHeaderBytes + count * kVectorBytes;
    FlowFileData data;
    data.flow.vectors = read_vectors(bytes, count);
    if (bytes.size() == body + kTrailerBytes && has_magic(bytes, kMotionMagic, body)) {
        const unsigned char* p = bytes.data() + body + 4;
        RigidMotion m;
        for (int c = 0; c < 3; ++c) m.r[c] = get_f64(p + 8 * c);
        for (int c = 0; c < 3; ++c) m.t[c] = get_f64(p + 24 + 8 * c);
        data.motion = m;
    } else if (bytes.size() != body) {
        io_error(path, "unexpected trailing bytes");
    }
    require_finite(data.flow.vectors, path.string());
    return data;
}

void write_flow(const fs::path& path, const FlowField& flow, const std::optional<RigidMotion>& motion) {
    std::string out = header(kFlowMagic, flow.size());
    put_vectors(out, flow.vectors);
    if (motion) {
        out.append(kMotionMagic, 4);
        for (int c = 0; c < 3; ++c) put_u64(out, std::bit_cast<std::uint64_t>(motion->r[c]));
        for (int c = 0; c < 3; ++c) put_u64(out, std::bit_cast<std::uint64_t>(motion->t[c]));
    }
    spill(path, out);
}

}  // namespace optflow::cli

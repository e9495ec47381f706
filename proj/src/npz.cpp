#include "sparse/npz.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <regex>

namespace sparse::npz {

namespace {

constexpr std::uint32_t kLocalHeaderSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;

template <class T>
T read_le(std::span<const std::uint8_t> buf, std::size_t offset) {
    if (offset + sizeof(T) > buf.size()) throw NpzError("truncated zip structure");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[offset + i]) << (8 * i);
    return value;
}

template <class T>
void write_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
}

struct Entry {
    std::string name;
    std::uint16_t method = 0;
    std::uint64_t compressed = 0;
    std::uint64_t uncompressed = 0;
    std::uint64_t local_offset = 0;
};

std::vector<std::uint8_t> inflate_raw(std::span<const std::uint8_t> in, std::uint64_t expected) {
    std::vector<std::uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw NpzError("inflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected) throw NpzError("corrupt deflate stream");
    return out;
}

std::vector<std::uint8_t> deflate_raw(std::span<const std::uint8_t> in) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw NpzError("deflateInit2 failed");
    }
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw NpzError("deflate failed");
    out.resize(zs.total_out);
    return out;
}

std::vector<Entry> read_central_directory(std::span<const std::uint8_t> buf) {
    if (buf.size() < 22) throw NpzError("file too small to be a zip archive");
    std::size_t eocd = std::string::npos;
    const std::size_t scan_floor = buf.size() > 22 + 65535 ? buf.size() - 22 - 65535 : 0;
    for (std::size_t pos = buf.size() - 22 + 1; pos-- > scan_floor;) {
        if (read_le<std::uint32_t>(buf, pos) == kEndSig) {
            eocd = pos;
            break;
        }
    }
    if (eocd == std::string::npos) throw NpzError("zip end-of-central-directory record not found");

    std::uint64_t count = read_le<std::uint16_t>(buf, eocd + 10);
    std::uint64_t cd_offset = read_le<std::uint32_t>(buf, eocd + 16);
    if ((count == 0xffff || cd_offset == 0xffffffffULL) && eocd >= 20 &&
        read_le<std::uint32_t>(buf, eocd - 20) == kZip64LocatorSig) {
        const std::uint64_t z64 = read_le<std::uint64_t>(buf, eocd - 20 + 8);
        if (read_le<std::uint32_t>(buf, z64) != kZip64EndSig) throw NpzError("bad zip64 end record");
        count = read_le<std::uint64_t>(buf, z64 + 32);
        cd_offset = read_le<std::uint64_t>(buf, z64 + 48);
    }

    std::vector<Entry> entries;
    std::size_t pos = cd_offset;
    for (std::uint64_t i = 0; i < count; ++i) {
        if (read_le<std::uint32_t>(buf, pos) != kCentralSig) throw NpzError("bad central directory entry");
        Entry e;
        e.method = read_le<std::uint16_t>(buf, pos + 10);
        e.compressed = read_le<std::uint32_t>(buf, pos + 20);
        e.uncompressed = read_le<std::uint32_t>(buf, pos + 24);
        const std::uint16_t name_len = read_le<std::uint16_t>(buf, pos + 28);
        const std::uint16_t extra_len = read_le<std::uint16_t>(buf, pos + 30);
        const std::uint16_t comment_len = read_le<std::uint16_t>(buf, pos + 32);
        e.local_offset = read_le<std::uint32_t>(buf, pos + 42);
        if (pos + 46 + name_len > buf.size()) throw NpzError("truncated entry name");
        e.name.assign(reinterpret_cast<const char*>(buf.data() + pos + 46), name_len);

        std::size_t extra = pos + 46 + name_len;
        const std::size_t extra_end = extra + extra_len;
        while (extra + 4 <= extra_end) {
            const std::uint16_t id = read_le<std::uint16_t>(buf, extra);
            const std::uint16_t size = read_le<std::uint16_t>(buf, extra + 2);
            if (id == 0x0001) {
                std::size_t field = extra + 4;
                if (e.uncompressed == 0xffffffffULL) {
                    e.uncompressed = read_le<std::uint64_t>(buf, field);
                    field += 8;
                }
                if (e.compressed == 0xffffffffULL) {
                    e.compressed = read_le<std::uint64_t>(buf, field);
                    field += 8;
                }
                if (e.local_offset == 0xffffffffULL) e.local_offset = read_le<std::uint64_t>(buf, field);
            }
            extra += 4 + size;
        }
        entries.push_back(std::move(e));
        pos = extra_end + comment_len;
    }
    return entries;
}

std::string descr_of(DType t) {
    switch (t) {
        case DType::bool_: return "|b1";
        case DType::u8: return "|u1";
        case DType::i8: return "|i1";
        case DType::u16: return "<u2";
        case DType::i16: return "<i2";
        case DType::u32: return "<u4";
        case DType::i32: return "<i4";
        case DType::u64: return "<u8";
        case DType::i64: return "<i8";
        case DType::f32: return "<f4";
        case DType::f64: return "<f8";
    }
    throw NpzError("unknown dtype");
}

DType dtype_of(const std::string& descr) {
    static const std::map<std::string, DType> table = {
        {"b1", DType::bool_}, {"u1", DType::u8},  {"i1", DType::i8},  {"u2", DType::u16},
        {"i2", DType::i16},   {"u4", DType::u32}, {"i4", DType::i32}, {"u8", DType::u64},
        {"i8", DType::i64},   {"f4", DType::f32}, {"f8", DType::f64}};
    if (descr.size() != 3) throw NpzError("unsupported dtype '" + descr + "'");
    const char order = descr[0];
    const std::string code = descr.substr(1);
    auto it = table.find(code);
    if (it == table.end()) throw NpzError("unsupported dtype '" + descr + "'");
    if (order == '>' && item_size(it->second) > 1) throw NpzError("big-endian arrays are not supported");
    return it->second;
}

template <class T>
T load_item(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <class Out>
std::vector<Out> convert(const Array& a) {
    const std::size_t n = static_cast<std::size_t>(a.numel());
    const std::size_t w = item_size(a.dtype);
    if (a.bytes.size() != n * w) throw NpzError("array payload size mismatch");
    std::vector<Out> out(n);
    const std::uint8_t* p = a.bytes.data();
    for (std::size_t i = 0; i < n; ++i, p += w) {
        switch (a.dtype) {
            case DType::bool_:
            case DType::u8: out[i] = static_cast<Out>(*p); break;
            case DType::i8: out[i] = static_cast<Out>(load_item<std::int8_t>(p)); break;
            case DType::u16: out[i] = static_cast<Out>(load_item<std::uint16_t>(p)); break;
            case DType::i16: out[i] = static_cast<Out>(load_item<std::int16_t>(p)); break;
            case DType::u32: out[i] = static_cast<Out>(load_item<std::uint32_t>(p)); break;
            case DType::i32: out[i] = static_cast<Out>(load_item<std::int32_t>(p)); break;
            case DType::u64: out[i] = static_cast<Out>(load_item<std::uint64_t>(p)); break;
            case DType::i64: out[i] = static_cast<Out>(load_item<std::int64_t>(p)); break;
            case DType::f32: out[i] = static_cast<Out>(load_item<float>(p)); break;
            case DType::f64: out[i] = static_cast<Out>(load_item<double>(p)); break;
        }
    }
    return out;
}

template <class T>
Array pack(DType dtype, std::vector<std::int64_t> shape, std::span<const T> values) {
    Array a;
    a.dtype = dtype;
    a.shape = std::move(shape);
    if (a.numel() != static_cast<std::int64_t>(values.size())) throw NpzError("value count does not match shape");
    a.bytes.resize(values.size() * sizeof(T));
    if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), a.bytes.size());
    return a;
}

}  // namespace

std::size_t item_size(DType t) {
    switch (t) {
        case DType::bool_:
        case DType::u8:
        case DType::i8: return 1;
        case DType::u16:
        case DType::i16: return 2;
        case DType::u32:
        case DType::i32:
        case DType::f32: return 4;
        case DType::u64:
        case DType::i64:
        case DType::f64: return 8;
    }
    return 0;
}

std::int64_t Array::numel() const {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::vector<double> Array::to_double() const { return convert<double>(*this); }
std::vector<std::int64_t> Array::to_int64() const { return convert<std::int64_t>(*this); }

Array Array::from_double(std::vector<std::int64_t> shape, std::span<const double> values) {
    return pack(DType::f64, std::move(shape), values);
}
Array Array::from_int64(std::vector<std::int64_t> shape, std::span<const std::int64_t> values) {
    return pack(DType::i64, std::move(shape), values);
}
Array Array::from_u8(std::vector<std::int64_t> shape, std::span<const std::uint8_t> values) {
    return pack(DType::u8, std::move(shape), values);
}

Array Array::from_text(const std::string& text) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    return from_u8({static_cast<std::int64_t>(bytes.size())}, bytes);
}

std::string Array::to_text() const {
    if (dtype != DType::u8) throw NpzError("text payload must be a uint8 array");
    return std::string(bytes.begin(), bytes.end());
}

Array parse_npy(std::span<const std::uint8_t> blob) {
    static const char magic[] = "\x93NUMPY";
    if (blob.size() < 10 || std::memcmp(blob.data(), magic, 6) != 0) throw NpzError("not an .npy payload");
    const std::uint8_t major = blob[6];
    std::size_t header_len = 0, header_start = 0;
    if (major == 1) {
        header_len = read_le<std::uint16_t>(blob, 8);
        header_start = 10;
    } else if (major == 2 || major == 3) {
        header_len = read_le<std::uint32_t>(blob, 8);
        header_start = 12;
    } else {
        throw NpzError("unsupported .npy version " + std::to_string(major));
    }
    if (header_start + header_len > blob.size()) throw NpzError("truncated .npy header");
    const std::string header(reinterpret_cast<const char*>(blob.data() + header_start), header_len);

    static const std::regex descr_re(R"('descr'\s*:\s*'([^']+)')");
    static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
    static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
    std::smatch m;
    if (!std::regex_search(header, m, descr_re)) throw NpzError("npy header lacks 'descr'");
    Array a;
    a.dtype = dtype_of(m[1]);
    if (!std::regex_search(header, m, fortran_re)) throw NpzError("npy header lacks 'fortran_order'");
    if (m[1] == "True") throw NpzError("Fortran-ordered arrays are not supported");
    if (!std::regex_search(header, m, shape_re)) throw NpzError("npy header lacks 'shape'");
    const std::string dims = m[1];
    static const std::regex int_re(R"(\d+)");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), int_re); it != std::sregex_iterator(); ++it) {
        a.shape.push_back(std::stoll(it->str()));
    }
    const std::size_t payload = static_cast<std::size_t>(a.numel()) * item_size(a.dtype);
    const std::size_t data_start = header_start + header_len;
    if (blob.size() - data_start < payload) throw NpzError("truncated .npy payload");
    a.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(data_start),
                   blob.begin() + static_cast<std::ptrdiff_t>(data_start + payload));
    return a;
}

std::vector<std::uint8_t> serialize_npy(const Array& array) {
    std::string header = "{'descr': '" + descr_of(array.dtype) + "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < array.shape.size(); ++i) {
        header += std::to_string(array.shape[i]);
        if (array.shape.size() == 1 || i + 1 < array.shape.size()) header += ",";
        if (i + 1 < array.shape.size()) header += " ";
    }
    header += "), }";
    // magic(6) + version(2) + len(2) + header + '\n', padded to 64 bytes
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header += '\n';
    std::vector<std::uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), array.bytes.begin(), array.bytes.end());
    return out;
}

Archive load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NpzError("cannot open '" + path.string() + "'");
    const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::span<const std::uint8_t> view(buf);

    Archive archive;
    for (const auto& e : read_central_directory(view)) {
        if (read_le<std::uint32_t>(view, e.local_offset) != kLocalHeaderSig) {
            throw NpzError("bad local header for '" + e.name + "'");
        }
        const std::uint16_t name_len = read_le<std::uint16_t>(view, e.local_offset + 26);
        const std::uint16_t extra_len = read_le<std::uint16_t>(view, e.local_offset + 28);
        const std::size_t start = e.local_offset + 30 + name_len + extra_len;
        if (start + e.compressed > buf.size()) throw NpzError("truncated member '" + e.name + "'");
        const auto raw = view.subspan(start, e.compressed);
        std::vector<std::uint8_t> blob;
        if (e.method == 0) {
            blob.assign(raw.begin(), raw.end());
        } else if (e.method == 8) {
            blob = inflate_raw(raw, e.uncompressed);
        } else {
            throw NpzError("unsupported zip compression method " + std::to_string(e.method));
        }
        std::string key = e.name;
        if (key.size() > 4 && key.ends_with(".npy")) key.resize(key.size() - 4);
        archive[key] = parse_npy(blob);
    }
    return archive;
}

void save(const std::filesystem::path& path, const Archive& archive, bool compress) {
    std::vector<std::uint8_t> out, central;
    std::uint16_t count = 0;
    for (const auto& [key, array] : archive) {
        const std::string name = key + ".npy";
        const auto blob = serialize_npy(array);
        const auto crc = static_cast<std::uint32_t>(crc32(0L, blob.data(), static_cast<uInt>(blob.size())));
        const std::vector<std::uint8_t> body = compress ? deflate_raw(blob) : blob;
        if (body.size() >= 0xffffffffULL || out.size() >= 0xffffffffULL) {
            throw NpzError("archive member too large for a plain zip");
        }
        const std::uint16_t method = compress ? 8 : 0;
        const auto offset = static_cast<std::uint32_t>(out.size());

        write_le<std::uint32_t>(out, kLocalHeaderSig);
        write_le<std::uint16_t>(out, 20);
        write_le<std::uint16_t>(out, 0);
        write_le<std::uint16_t>(out, method);
        write_le<std::uint16_t>(out, 0);
        write_le<std::uint16_t>(out, 0x21);
        write_le<std::uint32_t>(out, crc);
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(body.size()));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        write_le<std::uint16_t>(out, 0);
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), body.begin(), body.end());

        write_le<std::uint32_t>(central, kCentralSig);
        write_le<std::uint16_t>(central, 20);
        write_le<std::uint16_t>(central, 20);
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint16_t>(central, method);
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint16_t>(central, 0x21);
        write_le<std::uint32_t>(central, crc);
        write_le<std::uint32_t>(central, static_cast<std::uint32_t>(body.size()));
        write_le<std::uint32_t>(central, static_cast<std::uint32_t>(blob.size()));
        write_le<std::uint16_t>(central, static_cast<std::uint16_t>(name.size()));
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint16_t>(central, 0);
        write_le<std::uint32_t>(central, 0);
        write_le<std::uint32_t>(central, offset);
        central.insert(central.end(), name.begin(), name.end());
        ++count;
    }
    const auto cd_offset = static_cast<std::uint32_t>(out.size());
    out.insert(out.end(), central.begin(), central.end());
    write_le<std::uint32_t>(out, kEndSig);
    write_le<std::uint16_t>(out, 0);
    write_le<std::uint16_t>(out, 0);
    write_le<std::uint16_t>(out, count);
    write_le<std::uint16_t>(out, count);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(central.size()));
    write_le<std::uint32_t>(out, cd_offset);
    write_le<std::uint16_t>(out, 0);

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw NpzError("cannot write '" + tmp + "'");
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw NpzError("short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace sparse::npz

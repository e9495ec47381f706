#pragma once

// Reader/writer for numpy .npz archives (zip of .npy members), stored or
// deflate-compressed, including the zip64 records numpy emits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparse::npz {

class NpzError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DType { bool_, u8, i8, u16, i16, u32, i32, u64, i64, f32, f64 };

std::size_t item_size(DType t);

struct Array {
    DType dtype = DType::f64;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;  // little-endian, C order

    std::int64_t numel() const;
    std::vector<double> to_double() const;
    std::vector<std::int64_t> to_int64() const;

    static Array from_double(std::vector<std::int64_t> shape, std::span<const double> values);
    static Array from_int64(std::vector<std::int64_t> shape, std::span<const std::int64_t> values);
    static Array from_u8(std::vector<std::int64_t> shape, std::span<const std::uint8_t> values);
    static Array from_text(const std::string& text);
    std::string to_text() const;
};

// Keyed by member name without the ".npy" suffix.
using Archive = std::map<std::string, Array>;

Archive load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const Archive& archive, bool compress = true);

// .npy (de)serialisation of one array.
Array parse_npy(std::span<const std::uint8_t> blob);
std::vector<std::uint8_t> serialize_npy(const Array& array);

}  // namespace sparse::npz

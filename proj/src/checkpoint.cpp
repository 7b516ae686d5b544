#include "filet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace filet {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
  public:
    Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::string raw(size_t len) {
        need(len);
        std::string s = bytes_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

  private:
    void need(size_t len) {
        if (pos_ + len > bytes_.size()) {
            throw std::runtime_error("checkpoint read: " + path_ + " truncated at byte " +
                                     std::to_string(pos_));
        }
    }

    const std::string& bytes_;
    std::string path_;
    size_t pos_ = 0;
};

std::uint64_t element_count(const Tensor& t) {
    std::uint64_t n = 1;
    for (std::uint64_t d : t.dims) n *= d;
    return n;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<Tensor>& tensors) {
    std::string out;
    out += "FILT";
    put_u32(out, kFiletFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor& t : tensors) {
        if (t.dtype != 1 && t.dtype != 2) {
            throw std::invalid_argument("checkpoint write: tensor " + t.name +
                                        " has unknown dtype " + std::to_string(t.dtype));
        }
        if (element_count(t) != t.data.size()) {
            throw std::invalid_argument("checkpoint write: tensor " + t.name + " holds " +
                                        std::to_string(t.data.size()) + " values, dims say " +
                                        std::to_string(element_count(t)));
        }
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, t.dtype);
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint64_t d : t.dims) put_u64(out, d);
        for (double v : t.data) {
            if (t.dtype == 2) {
                put_f64(out, v);
            } else {
                put_f32(out, static_cast<float>(v));
            }
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw std::runtime_error("checkpoint write: cannot open " + path);
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw std::runtime_error("checkpoint write: short write to " + path);
    }
}

std::vector<Tensor> read_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw std::runtime_error("checkpoint read: cannot open " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    Reader r(bytes, path);

    if (r.raw(4) != "FILT") {
        throw std::runtime_error("checkpoint read: " + path + " has no FILT magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kFiletFormatVersion) {
        throw std::runtime_error("checkpoint read: " + path + " has version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kFiletFormatVersion));
    }
    const std::uint32_t count = r.u32();
    std::vector<Tensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t;
        const std::uint32_t name_len = r.u32();
        t.name = r.raw(name_len);
        t.dtype = r.u32();
        if (t.dtype != 1 && t.dtype != 2) {
            throw std::runtime_error("checkpoint read: tensor " + t.name + " has dtype " +
                                     std::to_string(t.dtype));
        }
        const std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) t.dims.push_back(r.u64());
        const std::uint64_t n = element_count(t);
        t.data.reserve(n);
        for (std::uint64_t e = 0; e < n; ++e) {
            t.data.push_back(t.dtype == 2 ? r.f64() : static_cast<double>(r.f32()));
        }
        tensors.push_back(std::move(t));
    }
    if (!r.done()) {
        throw std::runtime_error("checkpoint read: trailing bytes in " + path);
    }
    return tensors;
}

Tensor tensor_from_matrix(const std::string& name, const Matrix& m) {
    Tensor t;
    t.name = name;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.data.reserve(static_cast<size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
    return t;
}

Tensor tensor_scalar(const std::string& name, double value) {
    Tensor t;
    t.name = name;
    t.dims = {1};
    t.data = {value};
    return t;
}

Tensor tensor_from_indices(const std::string& name, const std::vector<Index>& indices) {
    Tensor t;
    t.name = name;
    t.dims = {static_cast<std::uint64_t>(indices.size())};
    for (Index i : indices) t.data.push_back(static_cast<double>(i));
    return t;
}

Matrix matrix_from_tensor(const Tensor& t) {
    if (t.dims.size() != 2) {
        throw std::runtime_error("checkpoint: tensor " + t.name + " is not a matrix");
    }
    Matrix m(static_cast<Index>(t.dims[0]), static_cast<Index>(t.dims[1]));
    size_t k = 0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
    return m;
}

double scalar_from_tensor(const Tensor& t) {
    if (t.data.size() != 1) {
        throw std::runtime_error("checkpoint: tensor " + t.name + " is not a scalar");
    }
    return t.data[0];
}

std::vector<Index> indices_from_tensor(const Tensor& t) {
    std::vector<Index> out;
    out.reserve(t.data.size());
    for (double v : t.data) out.push_back(static_cast<Index>(v));
    return out;
}

const Tensor& find_tensor(const std::vector<Tensor>& tensors, const std::string& name) {
    for (const Tensor& t : tensors) {
        if (t.name == name) return t;
    }
    throw std::runtime_error("checkpoint: no tensor named " + name);
}

bool has_tensor(const std::vector<Tensor>& tensors, const std::string& name) {
    for (const Tensor& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

}  // namespace filet

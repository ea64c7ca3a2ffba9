// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "spot/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace spot {

namespace binio {

namespace {

template <typename U>
void put(std::ostream& os, U v) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
    unsigned char bytes[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw DataError("unexpected end of binary stream");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
}

} // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put(os, v); }
void write_f64(std::ostream& os, double v) { put(os, std::bit_cast<std::uint64_t>(v)); }
void write_f32(std::ostream& os, float v) { put(os, std::bit_cast<std::uint32_t>(v)); }
std::uint32_t read_u32(std::istream& is) { return get<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get<std::uint64_t>(is); }
double read_f64(std::istream& is) { return std::bit_cast<double>(get<std::uint64_t>(is)); }
float read_f32(std::istream& is) { return std::bit_cast<float>(get<std::uint32_t>(is)); }

} // namespace binio

void write_checkpoint(std::ostream& os, const std::vector<NamedParameter>& params, const std::string& config_text) {
    os.write("SPOT", 4);
    binio::write_u32(os, kCheckpointVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        binio::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        binio::write_u32(os, static_cast<std::uint32_t>(p.value.rank()));
        for (Index e : p.value.shape()) binio::write_u64(os, static_cast<std::uint64_t>(e));
        for (double v : p.value.data()) binio::write_f64(os, v);
    }
    binio::write_u32(os, static_cast<std::uint32_t>(config_text.size()));
    os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedParameter>& params,
                      const std::string& config_text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_checkpoint(os, params, config_text);
    if (!os) throw DataError("failed writing " + path.string());
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "SPOT", 4) != 0) throw DataError("not a checkpoint (bad magic)");
    const auto version = binio::read_u32(is);
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto count = binio::read_u32(is);
    Checkpoint ckpt;
    for (std::uint32_t j = 0; j < count; ++j) {
        const auto len = binio::read_u32(is);
        if (len > (1u << 16)) throw DataError("checkpoint parameter name too long");
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw DataError("truncated checkpoint");
        const auto rank = binio::read_u32(is);
        if (rank > 16) throw DataError("checkpoint rank too large for " + name);
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<Index>(binio::read_u64(is));
        std::vector<double> data(shape_numel(shape));
        for (double& v : data) v = binio::read_f64(is);
        ckpt.parameters.push_back({name, Tensor::from(std::move(shape), std::move(data), true)});
    }
    const auto cfg_len = binio::read_u32(is);
    ckpt.config_text.assign(cfg_len, '\0');
    if (cfg_len && !is.read(ckpt.config_text.data(), cfg_len)) throw DataError("truncated checkpoint config");
    return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    return read_checkpoint(is);
}

void load_parameters(ParameterStore& store, const Checkpoint& ckpt) {
    for (auto& p : store.parameters()) {
        const NamedParameter* src = nullptr;
        for (const auto& c : ckpt.parameters) {
            if (c.name == p.name) src = &c;
        }
        if (!src) throw DataError("checkpoint lacks parameter " + p.name);
        if (src->value.shape() != p.value.shape()) {
            throw DataError("checkpoint parameter " + p.name + " has shape " + shape_string(src->value.shape()) +
                            ", model expects " + shape_string(p.value.shape()));
        }
        auto dst = p.value.mutable_data();
        std::copy(src->value.data().begin(), src->value.data().end(), dst.begin());
    }
}

} // namespace spot

#include "varmion/vmformat.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "varmion/common.hpp"

namespace varmion {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and this code writes host bytes directly");
static_assert(std::numeric_limits<double>::is_iec559);

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

// Caps the element count of a single array. Anything past this is a corrupt
// or hostile length field, not data we ever produce.
constexpr std::uint64_t kMaxElements = 1ull << 28;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw FrameError("write failed");
}

void put_u16(std::ostream& os, std::uint16_t v) { put_bytes(os, &v, sizeof v); }
void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, &v, sizeof v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, sizeof v); }

void get_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw FrameError("truncated file");
}

std::uint16_t get_u16(std::istream& is) {
    std::uint16_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}
std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}
std::uint8_t get_u8(std::istream& is) {
    std::uint8_t v;
    get_bytes(is, &v, sizeof v);
    return v;
}

void write_array(std::ostream& os, const std::string& name,
                 const std::vector<std::uint64_t>& extents, const double* data) {
    if (name.size() > 0xffff) throw FrameError("array name too long: " + name);
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    put_bytes(os, name.data(), name.size());
    const std::uint8_t dtype = 1;
    put_bytes(os, &dtype, 1);
    const std::uint8_t rank = static_cast<std::uint8_t>(extents.size());
    put_bytes(os, &rank, 1);
    std::uint64_t count = 1;
    for (std::uint64_t e : extents) {
        put_u64(os, e);
        count *= e;
    }
    if (count > 0) put_bytes(os, data, count * sizeof(double));
}

void write_matrix(std::ostream& os, const std::string& name, const Eigen::MatrixXd& m) {
    MatrixRM rm = m;
    write_array(os, name,
                {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                rm.data());
}

void write_vector(std::ostream& os, const std::string& name, const Eigen::VectorXd& v) {
    write_array(os, name, {static_cast<std::uint64_t>(v.size())}, v.data());
}

void write_indices(std::ostream& os, const std::string& name,
                   const std::vector<std::int64_t>& ids) {
    std::vector<double> buf(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) buf[i] = static_cast<double>(ids[i]);
    write_array(os, name, {static_cast<std::uint64_t>(ids.size())}, buf.data());
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    std::vector<std::uint64_t> extents(t.shape.size());
    for (std::size_t i = 0; i < t.shape.size(); ++i)
        extents[i] = static_cast<std::uint64_t>(t.shape[i]);
    write_array(os, name, extents, t.data.data());
}

struct RawArray {
    std::string name;
    std::vector<std::uint64_t> extents;
    std::vector<double> data;
};

RawArray read_array(std::istream& is) {
    RawArray a;
    const std::uint16_t name_len = get_u16(is);
    a.name.resize(name_len);
    if (name_len > 0) get_bytes(is, a.name.data(), name_len);
    const std::uint8_t dtype = get_u8(is);
    if (dtype != 1)
        throw FrameError("array '" + a.name + "' has unsupported dtype " + std::to_string(dtype));
    const std::uint8_t rank = get_u8(is);
    a.extents.resize(rank);
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
        a.extents[i] = get_u64(is);
        if (a.extents[i] > kMaxElements ||
            (a.extents[i] > 0 && count > kMaxElements / a.extents[i]))
            throw FrameError("array '" + a.name + "' has implausible extents");
        count *= a.extents[i];
    }
    a.data.resize(count);
    if (count > 0) get_bytes(is, a.data.data(), count * sizeof(double));
    return a;
}

RawArray expect_array(std::istream& is, const std::string& name, std::size_t rank) {
    RawArray a = read_array(is);
    if (a.name != name) throw FrameError("expected array '" + name + "', found '" + a.name + "'");
    if (a.extents.size() != rank)
        throw FrameError("array '" + name + "' has rank " + std::to_string(a.extents.size()) +
                         ", expected " + std::to_string(rank));
    return a;
}

Eigen::MatrixXd to_matrix(const RawArray& a) {
    const auto rows = static_cast<Eigen::Index>(a.extents[0]);
    const auto cols = static_cast<Eigen::Index>(a.extents[1]);
    Eigen::MatrixXd m(rows, cols);
    if (a.data.size() > 0) m = ConstMatMap(a.data.data(), rows, cols);
    return m;
}

Eigen::VectorXd to_vector(const RawArray& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.extents[0]));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = a.data[static_cast<std::size_t>(i)];
    return v;
}

std::vector<std::int64_t> to_indices(const RawArray& a) {
    std::vector<std::int64_t> ids(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) ids[i] = std::llround(a.data[i]);
    return ids;
}

Tensor to_tensor(const RawArray& a) {
    std::vector<std::int64_t> shape(a.extents.size());
    for (std::size_t i = 0; i < a.extents.size(); ++i)
        shape[i] = static_cast<std::int64_t>(a.extents[i]);
    return Tensor(shape, a.data);
}

void check_magic(std::istream& is, const char expected[4], const char* what) {
    char magic[4];
    get_bytes(is, magic, 4);
    if (std::memcmp(magic, expected, 4) != 0)
        throw FrameError(std::string("not a ") + what + " file (bad magic)");
}

std::string read_json_block(std::istream& is) {
    const std::uint64_t len = get_u64(is);
    if (len > kMaxElements) throw FrameError("implausible JSON block length");
    std::string text(len, '\0');
    if (len > 0) get_bytes(is, text.data(), len);
    return text;
}

nlohmann::json parse_json_block(const std::string& text, const char* what) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FrameError(std::string("malformed ") + what + " JSON");
    return j;
}

void write_json_block(std::ostream& os, const nlohmann::json& j) {
    const std::string text = j.dump();
    put_u64(os, text.size());
    put_bytes(os, text.data(), text.size());
}

void require_eof(std::istream& is, const char* what) {
    if (is.peek() != std::char_traits<char>::eof())
        throw FrameError(std::string("trailing bytes after ") + what + " payload");
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FrameError("cannot open '" + path + "' for writing");
    put_bytes(os, "VMDS", 4);
    put_u32(os, kDatasetVersion);
    write_json_block(os, ds.metadata);

    write_matrix(os, "sensors_interior", ds.sensors_interior);
    write_matrix(os, "sensors_boundary", ds.sensors_boundary);
    write_matrix(os, "output_nodes", ds.output_points);
    write_vector(os, "output_weights", ds.output_weights);
    write_matrix(os, "inputs_f", ds.inputs_f);
    write_matrix(os, "inputs_theta", ds.inputs_theta);
    write_matrix(os, "inputs_eta", ds.inputs_eta);
    write_matrix(os, "labels", ds.labels);
    write_matrix(os, "nodal_f", ds.nodal_f);
    write_matrix(os, "nodal_theta", ds.nodal_theta);
    write_matrix(os, "nodal_eta", ds.nodal_eta);
    write_matrix(os, "nodal_u", ds.nodal_u);
    write_indices(os, "split_train", ds.split_train);
    write_indices(os, "split_val", ds.split_val);
    write_indices(os, "split_test", ds.split_test);
    if (ds.factor_ids.size() > 0) write_matrix(os, "factor_ids", ds.factor_ids);

    os.flush();
    if (!os) throw FrameError("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FrameError("cannot open '" + path + "'");
    check_magic(is, "VMDS", "dataset");
    const std::uint32_t version = get_u32(is);
    if (version != kDatasetVersion)
        throw FrameError("unsupported dataset version " + std::to_string(version));

    Dataset ds;
    ds.metadata = parse_json_block(read_json_block(is), "dataset metadata");

    ds.sensors_interior = to_matrix(expect_array(is, "sensors_interior", 2));
    ds.sensors_boundary = to_matrix(expect_array(is, "sensors_boundary", 2));
    ds.output_points = to_matrix(expect_array(is, "output_nodes", 2));
    ds.output_weights = to_vector(expect_array(is, "output_weights", 1));
    ds.inputs_f = to_matrix(expect_array(is, "inputs_f", 2));
    ds.inputs_theta = to_matrix(expect_array(is, "inputs_theta", 2));
    ds.inputs_eta = to_matrix(expect_array(is, "inputs_eta", 2));
    ds.labels = to_matrix(expect_array(is, "labels", 2));
    ds.nodal_f = to_matrix(expect_array(is, "nodal_f", 2));
    ds.nodal_theta = to_matrix(expect_array(is, "nodal_theta", 2));
    ds.nodal_eta = to_matrix(expect_array(is, "nodal_eta", 2));
    ds.nodal_u = to_matrix(expect_array(is, "nodal_u", 2));
    ds.split_train = to_indices(expect_array(is, "split_train", 1));
    ds.split_val = to_indices(expect_array(is, "split_val", 1));
    ds.split_test = to_indices(expect_array(is, "split_test", 1));
    ds.factor_ids.resize(0, 0);
    if (is.peek() != std::char_traits<char>::eof()) {
        ds.factor_ids = to_matrix(expect_array(is, "factor_ids", 2));
        require_eof(is, "dataset");
    }
    return ds;
}

void write_checkpoint(const std::string& path, const CheckpointData& ck) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FrameError("cannot open '" + path + "' for writing");
    put_bytes(os, "VMCK", 4);
    put_u32(os, kCheckpointVersion);
    write_json_block(os, ck.arch);

    put_u32(os, static_cast<std::uint32_t>(ck.params.size()));
    for (const auto& [name, value] : ck.params) write_tensor(os, name, value);
    put_u32(os, static_cast<std::uint32_t>(ck.opt_arrays.size()));
    for (const auto& [name, value] : ck.opt_arrays) write_tensor(os, name, value);

    nlohmann::json report = ck.report;
    if (report.contains("wall_seconds")) report["wall_seconds"] = 0.0;
    write_json_block(os, report);

    os.flush();
    if (!os) throw FrameError("write failed for '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FrameError("cannot open '" + path + "'");
    check_magic(is, "VMCK", "checkpoint");
    const std::uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw FrameError("unsupported checkpoint version " + std::to_string(version));

    CheckpointData ck;
    ck.arch = parse_json_block(read_json_block(is), "architecture");
    const std::uint32_t n_params = get_u32(is);
    ck.params.reserve(n_params);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        RawArray a = read_array(is);
        ck.params.emplace_back(a.name, to_tensor(a));
    }
    const std::uint32_t n_opt = get_u32(is);
    ck.opt_arrays.reserve(n_opt);
    for (std::uint32_t i = 0; i < n_opt; ++i) {
        RawArray a = read_array(is);
        ck.opt_arrays.emplace_back(a.name, to_tensor(a));
    }
    ck.report = parse_json_block(read_json_block(is), "training report");
    require_eof(is, "checkpoint");
    return ck;
}

}  // namespace varmion

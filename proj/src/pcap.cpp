#include "flowcam/pcap.hpp"

#include <array>
#include <cstring>
#include <string>

#include <unistd.h>

#include "flowcam/errors.hpp"

namespace flowcam {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::size_t kGlobalHeaderSize = 24;
constexpr std::size_t kRecordHeaderSize = 16;
// Larger than any sane snaplen; guards against allocating garbage lengths.
constexpr std::uint32_t kMaxRecordSize = 16u * 1024u * 1024u;

std::uint32_t load_le32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_le32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
    p[2] = static_cast<std::uint8_t>(v >> 16);
    p[3] = static_cast<std::uint8_t>(v >> 24);
}

void put_le16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}

}  // namespace

CaptureReader::CaptureReader(const fs::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoFailure("cannot open capture " + path.string());

    std::array<std::uint8_t, kGlobalHeaderSize> header{};
    in_.read(reinterpret_cast<char*>(header.data()), header.size());
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) {
        empty_ = true;
        return;
    }
    if (got < kGlobalHeaderSize) throw MalformedCapture("truncated pcap global header");

    const std::uint32_t magic = load_le32(header.data());
    if (magic == kMagicMicros || magic == kMagicNanos) {
        swapped_ = false;
    } else if (__builtin_bswap32(magic) == kMagicMicros || __builtin_bswap32(magic) == kMagicNanos) {
        swapped_ = true;
    } else {
        throw MalformedCapture("bad pcap magic (pcapng is not supported)");
    }
    nanos_ = (swapped_ ? __builtin_bswap32(magic) : magic) == kMagicNanos;
    link_type_ = read_u32(header.data() + 20) & 0x0FFFFFFF;
}

std::uint32_t CaptureReader::read_u32(const std::uint8_t* p) const {
    const std::uint32_t v = load_le32(p);
    return swapped_ ? __builtin_bswap32(v) : v;
}

std::optional<RawFrame> CaptureReader::next() {
    if (empty_) return std::nullopt;

    std::array<std::uint8_t, kRecordHeaderSize> rec{};
    in_.read(reinterpret_cast<char*>(rec.data()), rec.size());
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got < kRecordHeaderSize) {
        throw MalformedCapture("truncated record header after frame " + std::to_string(frames_));
    }

    const std::uint32_t ts_sec = read_u32(rec.data());
    const std::uint32_t ts_frac = read_u32(rec.data() + 4);
    const std::uint32_t incl_len = read_u32(rec.data() + 8);
    const std::uint32_t orig_len = read_u32(rec.data() + 12);
    if (incl_len > kMaxRecordSize) {
        throw MalformedCapture("implausible record length " + std::to_string(incl_len));
    }

    RawFrame frame;
    frame.timestamp_us = static_cast<std::int64_t>(ts_sec) * 1'000'000 +
                         static_cast<std::int64_t>(nanos_ ? ts_frac / 1000 : ts_frac);
    frame.link_type = link_type_;
    frame.wire_length = orig_len;
    frame.data.resize(incl_len);
    in_.read(reinterpret_cast<char*>(frame.data.data()), incl_len);
    if (static_cast<std::uint32_t>(in_.gcount()) != incl_len) {
        throw MalformedCapture("truncated record data after frame " + std::to_string(frames_));
    }
    ++frames_;
    return frame;
}

std::vector<RawFrame> read_capture(const fs::path& path) {
    CaptureReader reader(path);
    std::vector<RawFrame> frames;
    while (auto f = reader.next()) frames.push_back(std::move(*f));
    return frames;
}

PcapWriter::PcapWriter(fs::path path, std::uint32_t link_type, std::uint32_t snaplen)
    : path_(std::move(path)), snaplen_(snaplen) {
    tmp_ = path_;
    tmp_ += ".tmp." + std::to_string(::getpid());
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoFailure("cannot open " + tmp_.string() + " for writing");

    std::array<std::uint8_t, kGlobalHeaderSize> header{};
    put_le32(header.data(), kMagicMicros);
    put_le16(header.data() + 4, 2);
    put_le16(header.data() + 6, 4);
    put_le32(header.data() + 16, snaplen_);
    put_le32(header.data() + 20, link_type);
    out_.write(reinterpret_cast<const char*>(header.data()), header.size());
}

PcapWriter::~PcapWriter() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        fs::remove(tmp_, ec);
    }
}

void PcapWriter::write(std::int64_t timestamp_us, std::span<const std::uint8_t> frame) {
    const auto incl = static_cast<std::uint32_t>(std::min<std::size_t>(frame.size(), snaplen_));
    std::array<std::uint8_t, kRecordHeaderSize> rec{};
    put_le32(rec.data(), static_cast<std::uint32_t>(timestamp_us / 1'000'000));
    put_le32(rec.data() + 4, static_cast<std::uint32_t>(timestamp_us % 1'000'000));
    put_le32(rec.data() + 8, incl);
    put_le32(rec.data() + 12, static_cast<std::uint32_t>(frame.size()));
    out_.write(reinterpret_cast<const char*>(rec.data()), rec.size());
    out_.write(reinterpret_cast<const char*>(frame.data()), incl);
}

void PcapWriter::commit() {
    out_.flush();
    if (!out_) throw IoFailure("write failed for " + tmp_.string());
    out_.close();
    std::error_code ec;
    fs::rename(tmp_, path_, ec);
    if (ec) throw IoFailure("cannot rename onto " + path_.string());
    committed_ = true;
}

}  // namespace flowcam

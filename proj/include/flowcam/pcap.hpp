#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

namespace flowcam {

namespace linktype {
inline constexpr std::uint32_t kEthernet = 1;
inline constexpr std::uint32_t kRawBsd = 12;
inline constexpr std::uint32_t kRaw = 101;
inline constexpr std::uint32_t kIpv4 = 228;
inline constexpr std::uint32_t kIpv6 = 229;
}  // namespace linktype

struct RawFrame {
    std::int64_t timestamp_us = 0;
    std::uint32_t link_type = linktype::kEthernet;
    /// Original length on the wire; may exceed data.size() when the capture
    /// was taken with a short snaplen.
    std::uint32_t wire_length = 0;
    std::vector<std::uint8_t> data;
};

/// Sequential reader for classic libpcap files (not pcapng). Accepts both
/// byte orders and both microsecond and nanosecond timestamp variants.
class CaptureReader {
public:
    /// Throws IoFailure if the file cannot be opened and MalformedCapture if
    /// the global header is bad. A zero-length file is a valid empty capture.
    explicit CaptureReader(const std::filesystem::path& path);

    /// Next frame in file order, or nullopt at a clean end of file. Throws
    /// MalformedCapture on a truncated record.
    std::optional<RawFrame> next();

    std::uint32_t link_type() const noexcept { return link_type_; }
    bool nanosecond_resolution() const noexcept { return nanos_; }
    std::size_t frames_read() const noexcept { return frames_; }

private:
    std::uint32_t read_u32(const std::uint8_t* p) const;

    std::ifstream in_;
    bool swapped_ = false;
    bool nanos_ = false;
    bool empty_ = false;
    std::uint32_t link_type_ = linktype::kEthernet;
    std::size_t frames_ = 0;
};

/// Reads every frame of a capture. Throws like CaptureReader.
std::vector<RawFrame> read_capture(const std::filesystem::path& path);

/// Little-endian, microsecond-resolution pcap writer. Output goes to a temp
/// file that is renamed into place by commit(); an uncommitted writer removes
/// its temp file on destruction.
class PcapWriter {
public:
    explicit PcapWriter(std::filesystem::path path,
                        std::uint32_t link_type = linktype::kEthernet,
                        std::uint32_t snaplen = 65535);
    ~PcapWriter();

    PcapWriter(const PcapWriter&) = delete;
    PcapWriter& operator=(const PcapWriter&) = delete;

    void write(std::int64_t timestamp_us, std::span<const std::uint8_t> frame);
    void commit();

private:
    std::filesystem::path path_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    std::uint32_t snaplen_;
    bool committed_ = false;
};

}  // namespace flowcam

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "hitl/bridge.hpp"

namespace hitl::bridge {

namespace ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::optional<std::string> header(std::string_view request, std::string_view name) {
  const std::string want = lower(std::string(name));
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos) {
    const std::size_t start = pos + 2;
    const std::size_t end = request.find("\r\n", start);
    const std::string_view line = request.substr(start, end == std::string_view::npos ? end : end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos && lower(std::string(line.substr(0, colon))) == want) {
      return trim(line.substr(colon + 1));
    }
    pos = end;
  }
  return std::nullopt;
}

void send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("send: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// Appends whatever is available within timeout_ms; false on EOF or error.
bool recv_some(int fd, std::string& buf, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  const int r = ::poll(&p, 1, timeout_ms);
  if (r == 0) return true;
  if (r < 0) return errno == EINTR;
  char tmp[8192];
  const ssize_t n = ::recv(fd, tmp, sizeof tmp, 0);
  if (n <= 0) return false;
  buf.append(tmp, static_cast<std::size_t>(n));
  return true;
}

// Reads an HTTP header block; anything after it stays in buf.
std::optional<std::string> read_http(int fd, std::string& buf, int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (true) {
    const std::size_t end = buf.find("\r\n\r\n");
    if (end != std::string::npos) {
      std::string head = buf.substr(0, end + 4);
      buf.erase(0, end + 4);
      return head;
    }
    if (buf.size() > 16384) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    if (!recv_some(fd, buf, static_cast<int>(left.count()))) return std::nullopt;
  }
}

}  // namespace

std::string accept_key(std::string_view client_key) {
  const std::string input = std::string(client_key) + std::string(kGuid);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("sha1 failed");
  }
  std::string out(4 * ((len + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), digest, static_cast<int>(len));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string encode_frame(std::string_view payload, std::uint8_t opcode, bool mask, std::uint32_t mask_key) {
  std::string f;
  f.push_back(static_cast<char>(0x80 | (opcode & 0x0f)));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xffff) {
    f.push_back(static_cast<char>(mbit | 126));
    f.push_back(static_cast<char>(n >> 8));
    f.push_back(static_cast<char>(n & 0xff));
  } else {
    f.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  }
  if (!mask) {
    f.append(payload);
    return f;
  }
  const unsigned char key[4] = {static_cast<unsigned char>(mask_key >> 24), static_cast<unsigned char>(mask_key >> 16),
                                static_cast<unsigned char>(mask_key >> 8), static_cast<unsigned char>(mask_key)};
  f.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) f.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return f;
}

std::optional<Parsed> parse_frame(std::string_view buf, bool want_mask) {
  if (buf.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  if (b0 & 0x70) throw std::runtime_error("websocket: reserved bits set");
  Parsed p;
  p.fin = (b0 & 0x80) != 0;
  p.opcode = b0 & 0x0f;
  const bool masked = (b1 & 0x80) != 0;
  if (masked != want_mask) throw std::runtime_error(want_mask ? "websocket: client frame not masked" : "websocket: server frame masked");
  std::uint64_t len = b1 & 0x7f;
  std::size_t pos = 2;
  if (len == 126) {
    if (buf.size() < 4) return std::nullopt;
    len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[2])) << 8) | static_cast<std::uint8_t>(buf[3]);
    pos = 4;
  } else if (len == 127) {
    if (buf.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf[2 + i]);
    pos = 10;
  }
  if (len > (1u << 24)) throw std::runtime_error("websocket: frame too large");
  unsigned char key[4] = {0, 0, 0, 0};
  if (masked) {
    if (buf.size() < pos + 4) return std::nullopt;
    std::memcpy(key, buf.data() + pos, 4);
    pos += 4;
  }
  if (buf.size() < pos + len) return std::nullopt;
  p.payload.assign(buf.data() + pos, len);
  if (masked) {
    for (std::size_t i = 0; i < p.payload.size(); ++i) p.payload[i] = static_cast<char>(p.payload[i] ^ key[i % 4]);
  }
  p.consumed = pos + len;
  return p;
}

Client::Client(const std::string& host, std::uint16_t port, int timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw std::runtime_error("ws client: cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw std::runtime_error("ws client: cannot connect to " + host + ":" + std::to_string(port));
  }
  const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
  send_all(fd_, "GET / HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n" +
                    "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  const auto head = read_http(fd_, buf_, timeout_ms);
  if (!head || head->find(" 101 ") == std::string::npos || header(*head, "Sec-WebSocket-Accept") != accept_key(key)) {
    ::close(fd_);
    fd_ = -1;
    throw std::runtime_error("ws client: handshake rejected");
  }
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_text(std::string_view text) {
  if (fd_ < 0) throw std::runtime_error("ws client: closed");
  mask_state_ = mask_state_ * 1664525u + 1013904223u;
  send_all(fd_, encode_frame(text, 0x1, true, mask_state_));
}

std::optional<std::string> Client::receive(int timeout_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  std::string message;
  while (fd_ >= 0) {
    while (auto p = parse_frame(buf_, false)) {
      buf_.erase(0, p->consumed);
      if (p->opcode == 0x8) {
        close();
        return std::nullopt;
      }
      if (p->opcode == 0x9) {
        send_all(fd_, encode_frame(p->payload, 0xA, true, mask_state_));
        continue;
      }
      if (p->opcode == 0xA) continue;
      message += p->payload;
      if (p->fin) return message;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    if (!recv_some(fd_, buf_, static_cast<int>(left.count()))) {
      ::close(fd_);
      fd_ = -1;
    }
  }
  return std::nullopt;
}

void Client::close() {
  if (fd_ < 0) return;
  try {
    send_all(fd_, encode_frame("", 0x8, true, mask_state_));
  } catch (const std::runtime_error&) {
  }
  ::close(fd_);
  fd_ = -1;
}

}  // namespace ws

namespace {

// One operator link at a time; a second connection is refused.
class Link {
 public:
  Link(Session& s) : session_(s) {}
  ~Link() { drop(false); }

  bool connected() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void accept_from(int listen_fd) {
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) return;
    std::string buf;
    const auto head = ws::read_http(fd, buf, 2000);
    const auto key = head ? ws::header(*head, "Sec-WebSocket-Key") : std::nullopt;
    if (!key) {
      try {
        ws::send_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
      } catch (const std::runtime_error&) {
      }
      ::close(fd);
      return;
    }
    if (connected()) {
      try {
        ws::send_all(fd, "HTTP/1.1 409 Conflict\r\nContent-Length: 0\r\n\r\n");
      } catch (const std::runtime_error&) {
      }
      ::close(fd);
      return;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    ws::send_all(fd, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                     "Sec-WebSocket-Accept: " + ws::accept_key(*key) + "\r\n\r\n");
    fd_ = fd;
    buf_ = std::move(buf);
    message_.clear();
    pump();
  }

  // Reads what is available and forwards complete messages.
  void read() {
    if (!connected()) return;
    if (!ws::recv_some(fd_, buf_, 0)) {
      drop(true);
      return;
    }
    pump();
  }

  void send(const std::string& text) {
    if (!connected()) return;
    try {
      ws::send_all(fd_, ws::encode_frame(text, 0x1, false));
    } catch (const std::runtime_error&) {
      drop(true);
    }
  }

  void drop(bool notify) {
    if (fd_ < 0) return;
    ::close(fd_);
    fd_ = -1;
    buf_.clear();
    if (notify) session_.disconnect();
  }

 private:
  void pump() {
    try {
      while (connected()) {
        auto p = ws::parse_frame(buf_, true);
        if (!p) break;
        buf_.erase(0, p->consumed);
        switch (p->opcode) {
          case 0x8:
            try {
              ws::send_all(fd_, ws::encode_frame("", 0x8, false));
            } catch (const std::runtime_error&) {
            }
            drop(true);
            return;
          case 0x9: ws::send_all(fd_, ws::encode_frame(p->payload, 0xA, false)); break;
          case 0xA: break;
          case 0x0:
          case 0x1:
            message_ += p->payload;
            if (p->fin) {
              session_.post_text(message_);
              message_.clear();
            }
            break;
          default: session_.post_text(p->payload); break;
        }
      }
    } catch (const std::runtime_error&) {
      drop(true);
    }
  }

  Session& session_;
  int fd_ = -1;
  std::string buf_;
  std::string message_;
};

}  // namespace

void serve(Session& session, const ServeOptions& options) {
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (lfd < 0) throw std::runtime_error("serve: socket failed");
  const int one = 1;
  ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options.port);
  if (::inet_pton(AF_INET, options.host.c_str(), &addr.sin_addr) != 1) {
    ::close(lfd);
    throw std::runtime_error("serve: bad host " + options.host);
  }
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 4) != 0) {
    ::close(lfd);
    throw std::runtime_error("serve: cannot listen on " + options.host + ":" + std::to_string(options.port));
  }
  socklen_t alen = sizeof addr;
  ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &alen);
  if (options.on_listen) options.on_listen(ntohs(addr.sin_port));

  std::atomic<bool> done{false};
  std::jthread net([&] {
    Link link(session);
    auto flush = [&] {
      while (auto m = session.pop_outbox()) link.send(*m);
    };
    while (!done.load()) {
      pollfd fds[2] = {{lfd, POLLIN, 0}, {link.fd(), POLLIN, 0}};
      const int n = ::poll(fds, link.connected() ? 2 : 1, 5);
      if (n > 0) {
        if (fds[0].revents & POLLIN) link.accept_from(lfd);
        if (link.connected() && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) link.read();
      }
      flush();
    }
    flush();
  });

  const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / session.config().tick_rate));
  auto next = std::chrono::steady_clock::now();
  while (!(options.stop && options.stop->load())) {
    if (options.max_ticks && session.ticks_emitted() >= options.max_ticks) break;
    session.tick();
    if (options.exit_when_finished && !session.running()) break;
    next += period;
    std::this_thread::sleep_until(next);
  }
  // Let the network side send what is queued.
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  done = true;
  net.join();
  ::close(lfd);
}

}  // namespace hitl::bridge

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cobs/keywords.hpp"
#include "cobs/text_readers.hpp"

using namespace cobs;

namespace {
std::string fixture(const std::string& name) {
  std::ifstream in(std::string(COBS_TEST_DATA) + "/" + name, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

TEST(TextReaders, DocxParagraphText) {
  auto text = read_docx_text(fixture("sample.docx"));
  EXPECT_EQ(tokenize(text), (std::vector<std::string>{"deep", "neural", "networks", "power", "computer", "vision",
                                                      "storage", "search"}));
  EXPECT_NE(text.find("Storage & search"), std::string::npos);
}

TEST(TextReaders, PdfPlainAndFlateStreams) {
  auto text = read_pdf_text(fixture("sample.pdf"));
  EXPECT_EQ(tokenize(text), (std::vector<std::string>{"object", "storage", "content", "search", "engine"}));
}

TEST(TextReaders, RegistryDispatchAndOverride) {
  TextReaders readers;
  EXPECT_EQ(readers.read(ContentFormat::PlainText, "hello"), "hello");
  readers.set(ContentFormat::PDF, [](BytesView) { return std::string("swapped"); });
  EXPECT_EQ(readers.read(ContentFormat::PDF, "%PDF-"), "swapped");
  EXPECT_THROW(readers.read(ContentFormat::JPEG, "x"), Error);
}

TEST(TextReaders, CorruptDocxIsUnsupported) {
  EXPECT_THROW(read_docx_text("PK\x03\x04 truncated"), Error);
  EXPECT_TRUE(tokenize(read_pdf_text("%PDF-1.4 no streams")).empty());
}

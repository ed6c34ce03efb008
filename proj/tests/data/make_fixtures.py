"""Regenerates the binary document fixtures used by the text-reader tests."""
import zipfile
import zlib

DOC_XML = (
    '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>'
    '<w:document xmlns:w="http://schemas.openxmlformats.org/wordprocessingml/2006/main"><w:body>'
    '<w:p><w:r><w:t>Deep neural networks</w:t></w:r><w:r><w:t xml:space="preserve"> power computer vision.</w:t></w:r></w:p>'
    '<w:p><w:r><w:t>Storage &amp; search</w:t></w:r></w:p>'
    '</w:body></w:document>'
)

with zipfile.ZipFile("sample.docx", "w", zipfile.ZIP_DEFLATED) as z:
    z.writestr("[Content_Types].xml", '<?xml version="1.0"?><Types/>')
    z.writestr("word/document.xml", DOC_XML)

plain = b"BT /F1 12 Tf 72 712 Td (Object storage) Tj ET"
packed = zlib.compress(b"BT /F1 12 Tf 72 690 Td [(con) -20 (tent search) -400 (engine)] TJ ET")
objs = [
    b"<< /Type /Catalog /Pages 2 0 R >>",
    b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
    b"<< /Type /Page /Parent 2 0 R /Contents [4 0 R 5 0 R] >>",
    b"<< /Length %d >>\nstream\n" % len(plain) + plain + b"\nendstream",
    b"<< /Length %d /Filter /FlateDecode >>\nstream\n" % len(packed) + packed + b"\nendstream",
]
out = bytearray(b"%PDF-1.4\n")
for i, body in enumerate(objs, 1):
    out += b"%d 0 obj\n" % i + body + b"\nendobj\n"
out += b"trailer\n<< /Root 1 0 R >>\n%%EOF\n"
open("sample.pdf", "wb").write(bytes(out))

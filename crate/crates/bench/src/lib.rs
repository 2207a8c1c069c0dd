//! Shared fixtures for the benchmark suite.

use kwf_core::keystructure::{parse_key_structure_file, KeyStructure};

pub const SOFTWARE_KSL: &str = "\
pattern is-a core intensional-definition :: * is a * :: subject,definition
pattern classified-in core classification :: * is classified in * and * :: subject,classes,last_class
pattern includes-and core extensional-definition.and :: * includes * and * :: subject,members,last_member
pattern includes-etc core extensional-definition.etc :: * includes * etc. :: subject,members
";

pub const SOFTWARE_PARAGRAPH: &str = "Software is a set of programs running on computer \
with corresponding documentation. Software is classified in three classes: system software, \
application software and supporting software. System software includes operating systems, \
compilers, database management systems and utility programs. Application software includes \
software for numerical computation, expert systems, etc. Supporting software includes \
software middleware, application server, etc.";

pub fn software_ks() -> KeyStructure {
    parse_key_structure_file("software", SOFTWARE_KSL).unwrap()
}

/// A document with `regions` tagged copies of the paragraph, separated by
/// filler the pump must skip.
pub fn tagged_document(regions: usize) -> String {
    let mut doc = String::new();
    for i in 0..regions {
        doc.push_str("Filler text outside any region. ");
        doc.push_str("<SOFTWARE>");
        doc.push_str(SOFTWARE_PARAGRAPH);
        doc.push_str("</SOFTWARE>");
        if i % 2 == 0 {
            doc.push('\n');
        }
    }
    doc
}

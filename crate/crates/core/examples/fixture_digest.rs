use consent27560::model::ConsentDocument;
use consent27560::{integrity, serialization};

fn main() {
    for arg in std::env::args().skip(1) {
        let text = std::fs::read_to_string(&arg).unwrap();
        let doc = serialization::parse_document(&text).unwrap();
        let value = if text.contains("hasRecordOfActivity") {
            ConsentDocument::Receipt(serialization::parse_receipt(&doc).unwrap().value)
        } else {
            ConsentDocument::Record(serialization::parse_record(&doc).unwrap().value)
        };
        println!("{}  {}", integrity::digest(&value).unwrap().hex(), arg);
    }
}

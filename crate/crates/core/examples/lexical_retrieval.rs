//! BM25 top-k over a small in-memory passage collection.

use alignrag::retrieval::{Bm25Index, Corpus, CorpusEntry};

fn main() -> anyhow::Result<()> {
    let passages = [
        ("p1", "Alexander (film)", "Alexander is a 2004 epic film directed by Oliver Stone."),
        ("p2", "Oliver Stone", "Oliver Stone is an American filmmaker and screenwriter."),
        ("p3", "Hail Mary pass", "A Hail Mary pass is a very long forward pass made in desperation."),
        ("p4", "Alexander the Great", "Alexander was king of Macedon and a student of Aristotle."),
    ];
    let corpus = Corpus::new(
        passages
            .iter()
            .map(|(id, title, text)| CorpusEntry {
                doc_id: id.to_string(),
                title: title.to_string(),
                contents: text.to_string(),
            })
            .collect(),
    )?;
    let index = Bm25Index::new(&corpus);
    for query in ["Which film about Alexander was directed by Oliver Stone?", "long desperate forward pass"] {
        println!("{query}");
        for hit in index.topk(query, 3) {
            println!("  {:>6.3}  {}  {}", hit.score, hit.doc_id, corpus.get(&hit.doc_id).unwrap().title);
        }
    }
    Ok(())
}

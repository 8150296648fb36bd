//! Reads prediction logs in both formats and shows how malformed rows are
//! reported.

use calibkit::store::{read_predictions, split_half, write_predictions, Format, IngestOptions, SplitTag};

fn show(label: &str, text: &str, format: Format, options: IngestOptions) {
    match read_predictions(text.as_bytes(), format, SplitTag::UnlabeledSplit, options) {
        Ok(set) => println!("{label}: ok, {} records, {} classes", set.len(), set.num_classes()),
        Err(err) => println!("{label}: {err}"),
    }
}

fn main() -> calibkit::Result<()> {
    let jsonl = "{\"logits\":[2.0,0.5,-1.0],\"label\":0}\n{\"logits\":[0.1,0.2,3.0],\"label\":2}\n";
    let csv = "logit_0,logit_1,logit_2,label\n2.0,0.5,-1.0,0\n0.1,0.2,3.0,2\n";
    show("jsonl", jsonl, Format::Jsonl, IngestOptions::default());
    show("csv", csv, Format::Csv, IngestOptions::default());

    show(
        "ragged",
        "{\"logits\":[1.0,2.0],\"label\":0}\n{\"logits\":[1.0,2.0,3.0],\"label\":1}\n",
        Format::Jsonl,
        IngestOptions::default(),
    );
    show(
        "label range",
        "{\"logits\":[1.0,2.0,3.0],\"label\":3}\n",
        Format::Jsonl,
        IngestOptions::default(),
    );
    show(
        "forced classes",
        "{\"logits\":[1.0,2.0,3.0],\"label\":0}\n",
        Format::Jsonl,
        IngestOptions { num_classes: Some(4) },
    );
    show(
        "bad header",
        "a,b,label\n1,2,0\n",
        Format::Csv,
        IngestOptions::default(),
    );

    let set = read_predictions(
        jsonl.as_bytes(),
        Format::Jsonl,
        SplitTag::InDomainTest,
        IngestOptions::default(),
    )?;
    let (a, b) = split_half(&set, 1)?;
    println!("split_half: {} + {}", a.len(), b.len());
    println!("as csv:");
    write_predictions(&set, Format::Csv, std::io::stdout().lock())?;
    Ok(())
}

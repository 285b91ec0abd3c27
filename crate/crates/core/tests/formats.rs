use cgrs_core::datamodel::{
    decode_embeddings, encode_embeddings, jsonl, read_embedding_file, write_embedding_file, ImageRecord, Matrix,
    QueryRecord, ResultRecord,
};
use cgrs_core::store::GalleryStore;
use cgrs_core::Error;

#[test]
fn header_layout() {
    let m = Matrix::from_rows(&[vec![1.0f32, 0.0, 0.5]]).unwrap();
    let bytes = encode_embeddings(&m).unwrap();
    assert_eq!(&bytes[0..4], b"CGEM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
    assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 0.5);
    assert_eq!(bytes.len(), 16 + 4 * 3);
}

#[test]
fn corrupt_files_are_rejected() {
    let m = Matrix::from_rows(&[vec![1.0f32, 2.0], vec![3.0, 4.0]]).unwrap();
    let good = encode_embeddings(&m).unwrap();

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(decode_embeddings(&magic).unwrap_err().contains("magic"));

    let mut version = good.clone();
    version[4] = 2;
    assert!(decode_embeddings(&version).is_err());

    assert!(decode_embeddings(&good[..good.len() - 4]).is_err());
    assert!(decode_embeddings(&good[..10]).is_err());
    let mut longer = good.clone();
    longer.extend_from_slice(&[0; 4]);
    assert!(decode_embeddings(&longer).is_err());
}

#[test]
fn zero_row_is_named_on_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.cgem");
    let m = Matrix::from_rows(&[vec![1.0f32, 2.0], vec![0.0, 0.0]]).unwrap();
    assert!(write_embedding_file(&path, &m).is_err());
    let mut bytes = b"CGEM".to_vec();
    for v in [1u32, 2, 2] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in [1.0f32, 2.0, 0.0, 0.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&path, bytes).unwrap();
    let err = read_embedding_file(&path).unwrap_err().to_string();
    assert!(err.contains("row 1"), "{err}");
}

#[test]
fn missing_file_names_the_path() {
    let err = read_embedding_file("/nonexistent/x.cgem").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/x.cgem"));
}

#[test]
fn malformed_jsonl_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    std::fs::write(
        &path,
        "{\"image_id\":\"a\",\"platform\":\"drone\",\"uri\":null,\"row_index\":0}\n\n{\"image_id\":\"b\",\"platform\":\"plane\"}\n",
    )
    .unwrap();
    let err = jsonl::read_jsonl::<ImageRecord>(&path).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
}

#[test]
fn duplicate_ids_fail_validation_with_every_violation() {
    let records: Vec<ImageRecord> = ["a", "a", "b"]
        .iter()
        .enumerate()
        .map(|(i, id)| ImageRecord {
            image_id: id.to_string(),
            platform: cgrs_core::datamodel::Platform::Drone,
            uri: None,
            row_index: if i == 2 { 7 } else { i },
        })
        .collect();
    let m = Matrix::from_rows(&[vec![1.0f32], vec![1.0], vec![1.0]]).unwrap();
    match GalleryStore::build(records, m) {
        Err(Error::Validation(report)) => {
            assert_eq!(report.violations.len(), 2, "{report}");
            let text = report.to_string();
            assert!(text.contains("\"a\"") && text.contains("row_index 7"), "{text}");
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn query_and_result_lines_parse() {
    let q: QueryRecord = serde_json::from_str(
        r#"{"query_id":"q","text":"the tall tower","relevant_ids":["a","b"],"row_index":3}"#,
    )
    .unwrap();
    assert_eq!(q.relevant_ids.len(), 2);
    let r: ResultRecord =
        serde_json::from_str(r#"{"query_id":"q","ranking":[{"image_id":"a","score":0.5},{"image_id":"b","score":0.25}]}"#)
            .unwrap();
    assert_eq!(r.to_ranked().unwrap().len(), 2);
    let unsorted: ResultRecord =
        serde_json::from_str(r#"{"query_id":"q","ranking":[{"image_id":"a","score":0.1},{"image_id":"b","score":0.5}]}"#)
            .unwrap();
    assert!(unsorted.to_ranked().is_err());
}

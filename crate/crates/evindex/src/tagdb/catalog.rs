//! Text catalog of a federation.
//!
//! The catalog is a line-oriented document, human inspectable, listing
//! the schema, the database files and the run-to-container map:
//!
//! ```text
//! format 1
//! size-cap 200000000
//! schema-hash f09e...
//! var RUN int32 1 header
//! var ET_TOTAL float32 1 calorimeter
//! file 1 db_00001.tagdb 157286400
//! container 35762 1 16 100400 100
//! ```
//!
//! `container` fields are: run, file id, byte offset, byte length,
//! record count. The catalog is always replaced by write-new-then-rename
//! so readers see either the old or the new version, never a torn one.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::federation::{ContainerRef, DbFileMeta};
use super::schema::{TagSchema, VarDescriptor, VarKind};
use super::TagDbError;

pub(crate) const CATALOG_FILE: &str = "catalog.txt";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub(crate) struct CatalogData {
    pub schema: TagSchema,
    pub size_cap: u64,
    pub files: Vec<DbFileMeta>,
    pub containers: Vec<ContainerRef>,
}

pub(crate) fn render(data: &CatalogData) -> String {
    let mut out = String::new();
    out.push_str(&format!("format {FORMAT_VERSION}\n"));
    out.push_str(&format!("size-cap {}\n", data.size_cap));
    out.push_str(&format!("schema-hash {:016x}\n", data.schema.hash()));
    for d in data.schema.vars() {
        out.push_str(&format!(
            "var {} {} {} {}\n",
            d.name,
            d.kind.as_str(),
            d.width,
            d.group
        ));
    }
    for f in &data.files {
        out.push_str(&format!("file {} {} {}\n", f.id, f.name, f.bytes));
    }
    for c in &data.containers {
        out.push_str(&format!(
            "container {} {} {} {} {}\n",
            c.run, c.file_id, c.offset, c.byte_len, c.records
        ));
    }
    out
}

/// Writes the catalog atomically: new file, flush, rename over the old.
pub(crate) fn write_atomic(dir: &Path, data: &CatalogData) -> Result<(), TagDbError> {
    let tmp = dir.join(format!("{CATALOG_FILE}.tmp"));
    let target = dir.join(CATALOG_FILE);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(render(data).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    #[cfg(unix)]
    {
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

fn cat_err(path: &Path, line: u32, msg: impl Into<String>) -> TagDbError {
    TagDbError::Catalog {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn load(dir: &Path) -> Result<CatalogData, TagDbError> {
    let path = dir.join(CATALOG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            cat_err(&path, 0, "catalog file not found")
        } else {
            TagDbError::Io(e)
        }
    })?;
    parse(&path, &text)
}

pub(crate) fn parse(path: &Path, text: &str) -> Result<CatalogData, TagDbError> {
    let mut size_cap: Option<u64> = None;
    let mut schema_hash: Option<u64> = None;
    let mut vars: Vec<VarDescriptor> = Vec::new();
    let mut files: Vec<DbFileMeta> = Vec::new();
    let mut containers: Vec<ContainerRef> = Vec::new();
    let mut saw_format = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i as u32 + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let key = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        match key {
            "format" => {
                let v: u32 = one(path, line, &rest)?
                    .parse()
                    .map_err(|_| cat_err(path, line, "bad format version"))?;
                if v != FORMAT_VERSION {
                    return Err(cat_err(path, line, format!("unsupported format {v}")));
                }
                saw_format = true;
            }
            "size-cap" => {
                size_cap = Some(
                    one(path, line, &rest)?
                        .parse()
                        .map_err(|_| cat_err(path, line, "bad size-cap"))?,
                );
            }
            "schema-hash" => {
                schema_hash = Some(
                    u64::from_str_radix(one(path, line, &rest)?, 16)
                        .map_err(|_| cat_err(path, line, "bad schema-hash"))?,
                );
            }
            "var" => {
                if rest.len() != 4 {
                    return Err(cat_err(path, line, "var needs: name kind width group"));
                }
                let kind = VarKind::parse(rest[1])
                    .ok_or_else(|| cat_err(path, line, format!("unknown kind {:?}", rest[1])))?;
                let width: u32 = rest[2]
                    .parse()
                    .map_err(|_| cat_err(path, line, "bad width"))?;
                vars.push(VarDescriptor {
                    name: rest[0].to_string(),
                    kind,
                    width,
                    group: rest[3].to_string(),
                });
            }
            "file" => {
                if rest.len() != 3 {
                    return Err(cat_err(path, line, "file needs: id name bytes"));
                }
                files.push(DbFileMeta {
                    id: rest[0].parse().map_err(|_| cat_err(path, line, "bad id"))?,
                    name: rest[1].to_string(),
                    bytes: rest[2]
                        .parse()
                        .map_err(|_| cat_err(path, line, "bad bytes"))?,
                });
            }
            "container" => {
                if rest.len() != 5 {
                    return Err(cat_err(
                        path,
                        line,
                        "container needs: run file-id offset bytes records",
                    ));
                }
                let nums: Result<Vec<u64>, _> = rest.iter().map(|s| s.parse::<u64>()).collect();
                let nums = nums.map_err(|_| cat_err(path, line, "bad container field"))?;
                containers.push(ContainerRef {
                    run: nums[0] as u32,
                    file_id: nums[1] as u32,
                    offset: nums[2],
                    byte_len: nums[3],
                    records: nums[4] as u32,
                });
            }
            other => {
                return Err(cat_err(path, line, format!("unknown key {other:?}")));
            }
        }
    }

    if !saw_format {
        return Err(cat_err(path, 0, "missing format line"));
    }
    let size_cap = size_cap.ok_or_else(|| cat_err(path, 0, "missing size-cap"))?;
    let schema = TagSchema::define(vars)?;
    match schema_hash {
        Some(h) if h == schema.hash() => {}
        Some(h) => {
            return Err(cat_err(
                path,
                0,
                format!(
                    "schema-hash {:016x} does not match the listed variables ({:016x})",
                    h,
                    schema.hash()
                ),
            ))
        }
        None => return Err(cat_err(path, 0, "missing schema-hash")),
    }
    Ok(CatalogData {
        schema,
        size_cap,
        files,
        containers,
    })
}

fn one<'a>(path: &Path, line: u32, rest: &[&'a str]) -> Result<&'a str, TagDbError> {
    if rest.len() != 1 {
        return Err(cat_err(path, line, "expected exactly one value"));
    }
    Ok(rest[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let schema = TagSchema::default_schema();
        let data = CatalogData {
            schema: schema.clone(),
            size_cap: 200_000_000,
            files: vec![DbFileMeta {
                id: 1,
                name: "db_00001.tagdb".into(),
                bytes: 5000,
            }],
            containers: vec![ContainerRef {
                run: 35762,
                file_id: 1,
                offset: 16,
                byte_len: 4984,
                records: 4,
            }],
        };
        let text = render(&data);
        let back = parse(Path::new("catalog.txt"), &text).unwrap();
        assert_eq!(back.schema, schema);
        assert_eq!(back.size_cap, 200_000_000);
        assert_eq!(back.files.len(), 1);
        assert_eq!(back.containers.len(), 1);
        assert_eq!(back.containers[0].run, 35762);
    }

    #[test]
    fn bad_lines_report_numbers() {
        let text = "format 1\nsize-cap 10\nwhatnow 3\n";
        match parse(Path::new("c"), text) {
            Err(TagDbError::Catalog { line: 3, .. }) => {}
            other => panic!("expected Catalog error at line 3, got {other:?}"),
        }
    }

    #[test]
    fn hash_mismatch_is_detected() {
        let schema = TagSchema::default_schema();
        let hash_line = format!("schema-hash {:016x}", schema.hash());
        let data = CatalogData {
            schema,
            size_cap: 10,
            files: vec![],
            containers: vec![],
        };
        let text = render(&data).replace(&hash_line, "schema-hash 0000000000000001");
        match parse(Path::new("c"), &text) {
            Err(TagDbError::Catalog { msg, .. }) => {
                assert!(msg.contains("does not match"), "msg: {msg}")
            }
            other => panic!("expected hash mismatch, got {other:?}"),
        }
    }
}

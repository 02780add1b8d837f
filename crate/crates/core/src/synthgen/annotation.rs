//! Annotation XML: `annotation > filename, size(width, height, depth),
//! object*(name, bndbox(xmin, ymin, xmax, ymax))`, tab-indented, LF line
//! endings, no declaration and no attributes. `xmax`/`ymax` are exclusive.

use std::fmt::Write as _;
use std::path::Path;

use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::types::{AnnotatedObject, Annotation, BoundingBox, DefectClass};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

pub fn annotation_to_xml(ann: &Annotation) -> String {
    let mut s = String::new();
    s.push_str("<annotation>\n");
    let _ = writeln!(s, "\t<filename>{}</filename>", escape(&ann.filename));
    s.push_str("\t<size>\n");
    let _ = writeln!(s, "\t\t<width>{}</width>", ann.width);
    let _ = writeln!(s, "\t\t<height>{}</height>", ann.height);
    let _ = writeln!(s, "\t\t<depth>{}</depth>", ann.depth);
    s.push_str("\t</size>\n");
    for o in &ann.objects {
        s.push_str("\t<object>\n");
        let _ = writeln!(s, "\t\t<name>{}</name>", o.class.name());
        s.push_str("\t\t<bndbox>\n");
        let b = o.bbox;
        let _ = writeln!(s, "\t\t\t<xmin>{}</xmin>", b.xmin);
        let _ = writeln!(s, "\t\t\t<ymin>{}</ymin>", b.ymin);
        let _ = writeln!(s, "\t\t\t<xmax>{}</xmax>", b.xmax);
        let _ = writeln!(s, "\t\t\t<ymax>{}</ymax>", b.ymax);
        s.push_str("\t\t</bndbox>\n");
        s.push_str("\t</object>\n");
    }
    s.push_str("</annotation>\n");
    s
}

fn child<'a, 'i>(node: Node<'a, 'i>, tag: &str, path: &str) -> Result<Node<'a, 'i>> {
    node.children()
        .find(|c| c.has_tag_name(tag))
        .ok_or_else(|| Error::parse(format!("{path}.{tag}"), "missing element"))
}

fn text<'a>(node: Node<'a, '_>, tag: &str, path: &str) -> Result<&'a str> {
    Ok(child(node, tag, path)?.text().unwrap_or("").trim())
}

fn int(node: Node, tag: &str, path: &str) -> Result<u32> {
    let t = text(node, tag, path)?;
    t.parse().map_err(|_| {
        Error::parse(
            format!("{path}.{tag}"),
            format!("expected a non-negative integer, got `{t}`"),
        )
    })
}

pub fn annotation_from_xml(xml: &str) -> Result<Annotation> {
    let doc = Document::parse(xml).map_err(|e| Error::parse("annotation", e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(Error::parse(
            "annotation",
            format!("root element is <{}>", root.tag_name().name()),
        ));
    }
    let filename = text(root, "filename", "annotation")?.to_string();
    let size = child(root, "size", "annotation")?;
    let (width, height, depth) = (
        int(size, "width", "annotation.size")?,
        int(size, "height", "annotation.size")?,
        int(size, "depth", "annotation.size")?,
    );
    let mut objects = Vec::new();
    for (i, obj) in root.children().filter(|c| c.has_tag_name("object")).enumerate() {
        let path = format!("annotation.object[{i}]");
        let name = text(obj, "name", &path)?;
        let class: DefectClass = name
            .parse()
            .map_err(|_| Error::parse(format!("{path}.name"), format!("unknown defect class `{name}`")))?;
        let bb = child(obj, "bndbox", &path)?;
        let bpath = format!("{path}.bndbox");
        let (xmin, ymin, xmax, ymax) = (
            int(bb, "xmin", &bpath)?,
            int(bb, "ymin", &bpath)?,
            int(bb, "xmax", &bpath)?,
            int(bb, "ymax", &bpath)?,
        );
        if xmax <= xmin {
            return Err(Error::parse(
                format!("{bpath}.xmax"),
                format!("xmax {xmax} <= xmin {xmin}"),
            ));
        }
        if ymax <= ymin {
            return Err(Error::parse(
                format!("{bpath}.ymax"),
                format!("ymax {ymax} <= ymin {ymin}"),
            ));
        }
        objects.push(AnnotatedObject {
            class,
            bbox: BoundingBox { xmin, ymin, xmax, ymax },
        });
    }
    let ann = Annotation {
        filename,
        width,
        height,
        depth,
        objects,
    };
    ann.validate()?;
    Ok(ann)
}

pub fn write_annotation(ann: &Annotation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, annotation_to_xml(ann)).map_err(|e| Error::io(path, e))
}

pub fn read_annotation(path: impl AsRef<Path>) -> Result<Annotation> {
    let path = path.as_ref();
    let xml = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    annotation_from_xml(&xml)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> Annotation {
        Annotation {
            filename: "01_spur_01.png".into(),
            width: 600,
            height: 600,
            depth: 3,
            objects: vec![AnnotatedObject {
                class: DefectClass::Spur,
                bbox: BoundingBox::new(10, 20, 30, 45).unwrap(),
            }],
        }
    }

    #[test]
    fn exact_bytes() {
        let expected = "<annotation>\n\t<filename>01_spur_01.png</filename>\n\t<size>\n\t\t<width>600</width>\n\t\t<height>600</height>\n\t\t<depth>3</depth>\n\t</size>\n\t<object>\n\t\t<name>spur</name>\n\t\t<bndbox>\n\t\t\t<xmin>10</xmin>\n\t\t\t<ymin>20</ymin>\n\t\t\t<xmax>30</xmax>\n\t\t\t<ymax>45</ymax>\n\t\t</bndbox>\n\t</object>\n</annotation>\n";
        assert_eq!(annotation_to_xml(&one()), expected);
    }

    #[test]
    fn round_trip() {
        let a = one();
        assert_eq!(annotation_from_xml(&annotation_to_xml(&a)).unwrap(), a);
        let mut b = a.clone();
        b.filename = "a&b<c>.png".into();
        assert_eq!(annotation_from_xml(&annotation_to_xml(&b)).unwrap(), b);
    }

    #[test]
    fn inverted_box_names_field() {
        let xml = annotation_to_xml(&one()).replace("<xmax>30</xmax>", "<xmax>10</xmax>");
        match annotation_from_xml(&xml) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "annotation.object[0].bndbox.xmax"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_names_field() {
        let xml = annotation_to_xml(&one()).replace("\t\t<depth>3</depth>\n", "");
        match annotation_from_xml(&xml) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "annotation.size.depth"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_markup() {
        assert!(annotation_from_xml("<annotation><filename>x</annotation>").is_err());
    }
}

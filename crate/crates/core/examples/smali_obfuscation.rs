//! String encoding and call reflection on a short smali method.

use gauntlet::smali::{encode_string, parse_smali, reflect_call, serialize_smali, Statement};

const SMALI: &str = "\
.class public Lwap/cash/DownloadActivity;
.super Landroid/app/Activity;

.method public run()V
    .locals 7

    const-string v5, \"http://abc.com\"
    invoke-virtual {p0, v6}, Lwap/cash/DownloadActivity;->getSystemService(Ljava/lang/String;)Ljava/lang/Object;
    move-result-object v0
    return-void
.end method
";

fn main() {
    let file = parse_smali(SMALI);
    assert_eq!(serialize_smali(&file), SMALI);
    let find = |f: &gauntlet::smali::SmaliFile, want: fn(&Statement) -> bool| {
        f.statements.iter().position(|l| want(&l.stmt)).unwrap()
    };

    let at = find(&file, |s| matches!(s, Statement::ConstString { .. }));
    let file = encode_string(&file, at).unwrap();
    let at = find(
        &file,
        |s| matches!(s, Statement::Invoke { method, .. } if method.method_name == "getSystemService"),
    );
    let file = reflect_call(&file, at, "Z2V0U3lzdGVtU2VydmljZQ==").unwrap();
    print!("{}", serialize_smali(&file));
}

//! The manifest primitives the attacks are built from.

use gauntlet::manifest::{
    extract_to_include, insert_pocket, parse_manifest, serialize_manifest, to_group, to_sdk23,
};

const MANIFEST: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.example.sms">
    <uses-permission android:name="android.permission.READ_SMS"/>
    <uses-permission android:name="android.permission.SEND_SMS"/>
    <uses-permission android:name="android.permission.INTERNET"/>
    <application>
        <receiver android:name=".SmsReceiver">
            <intent-filter>
                <action android:name="android.provider.Telephony.SMS_RECEIVED"/>
            </intent-filter>
        </receiver>
    </application>
</manifest>
"#;

fn main() {
    let doc = parse_manifest(MANIFEST).expect("well-formed");
    let perms: Vec<_> = doc.permissions().cloned().collect();

    let doc = to_sdk23(&doc, &perms[0]).unwrap();
    let doc = to_group(&doc, &perms[1]).unwrap();
    let (doc, inc) = extract_to_include(&doc, (&perms[2]).into()).unwrap();
    let (doc, pocket) = insert_pocket(&doc, "1232rt", "100.50.43.22");

    print!("{}", serialize_manifest(&doc));
    println!("--- {}", inc.path);
    print!("{}", inc.xml);
    println!("--- pocket {pocket}");
}
